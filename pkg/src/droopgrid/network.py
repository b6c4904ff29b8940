"""Electrical network model and instantaneous power injections.

All quantities are per-unit.  The network is described by a symmetric
susceptance matrix ``B`` and conductance matrix ``G`` with the sign
convention ``B[j, l] >= 0`` for couplings (``j != l``) and diagonal
``B[j, j] = shunt_j - sum_k B[j, k]``.  Lossless networks have ``G = 0``.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

SYMMETRY_TOL = 1e-12


def _as_vector(x, n: int, name: str) -> np.ndarray:
    """Broadcast a scalar or length-n sequence to a float array of length n."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"{name} must be a scalar or length-{n} sequence, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class GridNetwork:
    """Reduced grid on inverter nodes.

    Attributes
    ----------
    n : int
        Number of nodes.
    B : ndarray, shape (n, n)
        Susceptance matrix, symmetric, off-diagonal entries >= 0.
    G : ndarray, shape (n, n)
        Conductance matrix, symmetric; exactly zero in lossless mode.
    lossless : bool
        If True, all G entries are zero and the simplified flow
        equations apply.
    """

    n: int
    B: np.ndarray
    G: np.ndarray
    lossless: bool = True

    def __post_init__(self):
        B = np.array(self.B, dtype=float)
        G = np.array(self.G, dtype=float)
        if B.shape != (self.n, self.n) or G.shape != (self.n, self.n):
            raise ValueError(f"matrix shapes {B.shape}, {G.shape} do not match n={self.n}")
        if np.max(np.abs(B - B.T), initial=0.0) > SYMMETRY_TOL:
            raise ValueError("susceptance matrix is not symmetric")
        if np.max(np.abs(G - G.T), initial=0.0) > SYMMETRY_TOL:
            raise ValueError("conductance matrix is not symmetric")
        if self.lossless and np.any(G != 0.0):
            raise ValueError("lossless network must have an all-zero conductance matrix")
        off = B - np.diag(np.diag(B))
        if np.min(off, initial=0.0) < -SYMMETRY_TOL:
            raise ValueError("coupling susceptances B[j,l] (j != l) must be non-negative")
        B.setflags(write=False)
        G.setflags(write=False)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "G", G)

    def couplings(self) -> list[tuple[int, int, float]]:
        """Return the list of (j, l, b) couplings with j < l and b > 0."""
        out = []
        for j in range(self.n):
            for l in range(j + 1, self.n):
                if self.B[j, l] > 0.0:
                    out.append((j, l, float(self.B[j, l])))
        return out

    def shunts(self) -> np.ndarray:
        """Per-node shunt susceptances (row sums of B, by the diagonal convention)."""
        return self.B.sum(axis=1)

    def to_dict(self) -> dict:
        """JSON-ready description: nodes, lines, shunts, lossless."""
        lines = [{"from": j, "to": l, "b": b} for j, l, b in self.couplings()]
        shunt_vals = self.shunts()
        shunts = [
            {"node": j, "b": float(shunt_vals[j])}
            for j in range(self.n)
            if abs(shunt_vals[j]) > 1e-14
        ]
        return {"nodes": self.n, "lines": lines, "shunts": shunts, "lossless": self.lossless}


def build_network(
    couplings,
    shunts=(),
    lossless: bool = True,
    n: int | None = None,
) -> GridNetwork:
    """Assemble a GridNetwork from line couplings and shunts.

    Parameters
    ----------
    couplings : iterable of (j, l, b)
        Line susceptances b > 0 between distinct nodes j and l.
    shunts : iterable of (j, b)
        Shunt susceptances to ground.  The diagonal becomes
        ``B[j, j] = shunt_j - sum_{k != j} B[j, k]``.
    lossless : bool
        Build with zero conductance (the only mode with line data;
        lossy networks are constructed directly from G, B matrices).
    n : int, optional
        Node count; inferred from the largest index if omitted.

    Raises
    ------
    ValueError
        On non-positive couplings, invalid indices, or a disconnected
        coupling graph (components must be analyzed separately).
    """
    couplings = list(couplings)
    shunts = list(shunts)
    if n is None:
        idx = [j for j, l, _ in couplings] + [l for j, l, _ in couplings]
        idx += [j for j, _ in shunts]
        if not idx:
            raise ValueError("cannot infer node count from empty couplings and shunts")
        n = max(idx) + 1
    B = np.zeros((n, n))
    for j, l, b in couplings:
        if not (0 <= j < n and 0 <= l < n) or j == l:
            raise ValueError(f"invalid coupling ({j}, {l}) for {n} nodes")
        if b <= 0.0:
            raise ValueError(f"coupling susceptance must be positive, got b={b} on ({j}, {l})")
        B[j, l] += b
        B[l, j] += b
    diag = -B.sum(axis=1)
    for j, b in shunts:
        if not 0 <= j < n:
            raise ValueError(f"invalid shunt node {j} for {n} nodes")
        diag[j] += b
    B[np.diag_indices(n)] = diag

    # Connectivity over nonzero couplings (single node is trivially connected).
    if n > 1:
        adj = [[] for _ in range(n)]
        for j, l, _ in couplings:
            adj[j].append(l)
            adj[l].append(j)
        seen = np.zeros(n, dtype=bool)
        queue = deque([0])
        seen[0] = True
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    queue.append(v)
        if not seen.all():
            missing = np.flatnonzero(~seen).tolist()
            raise ValueError(f"coupling graph is disconnected; unreachable nodes {missing}")

    return GridNetwork(n=n, B=B, G=np.zeros((n, n)), lossless=lossless)


def network_from_dict(data: dict) -> GridNetwork:
    """Build a network from the JSON description {nodes, lines, shunts, lossless}."""
    n = int(data["nodes"])
    couplings = [(int(e["from"]), int(e["to"]), float(e["b"])) for e in data.get("lines", [])]
    shunts = [(int(s["node"]), float(s["b"])) for s in data.get("shunts", [])]
    return build_network(couplings, shunts, lossless=bool(data.get("lossless", True)), n=n)


def load_network(path) -> GridNetwork:
    with open(path) as fh:
        return network_from_dict(json.load(fh))


def save_network(net: GridNetwork, path) -> None:
    with open(path, "w") as fh:
        json.dump(net.to_dict(), fh, indent=2)


def kron_reduce(net: GridNetwork, passive) -> GridNetwork:
    """Eliminate passive constant-impedance nodes by Schur complement.

    The passive nodes' loads must already be encoded as shunts.  The
    returned network lives on the active nodes, in ascending original
    order, and carries the effective couplings and shunts.

    Raises
    ------
    ValueError
        If the passive sub-block of the admittance matrix is singular
        (the eliminated nodes do not define a unique interior solution).
    """
    passive = sorted(set(int(p) for p in passive))
    if any(p < 0 or p >= net.n for p in passive):
        raise ValueError(f"passive node indices out of range for {net.n} nodes")
    if not passive:
        return net
    active = [j for j in range(net.n) if j not in passive]
    if not active:
        raise ValueError("cannot eliminate every node")
    Y = net.G + 1j * net.B
    Yaa = Y[np.ix_(active, active)]
    Yap = Y[np.ix_(active, passive)]
    Ypa = Y[np.ix_(passive, active)]
    Ypp = Y[np.ix_(passive, passive)]
    try:
        X = np.linalg.solve(Ypp, Ypa)
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            f"passive block is singular and cannot be eliminated "
            f"(nodes {passive}); add shunt impedances or split the reduction: {exc}"
        ) from None
    if not np.all(np.isfinite(X)):
        raise ValueError(f"passive block is numerically singular (nodes {passive})")
    Yred = Yaa - Yap @ X
    return GridNetwork(
        n=len(active),
        B=Yred.imag.copy(),
        G=np.zeros_like(Yred.real) if net.lossless else Yred.real.copy(),
        lossless=net.lossless,
    )


@dataclass(frozen=True)
class InverterParams:
    """Per-node droop-controller parameters plus the global frequency target.

    All per-node fields are length-n arrays: ``tau`` low-pass time
    constants (s), ``kappa``/``chi`` active/reactive droop gains,
    ``Pd``/``Qd`` desired active/reactive power, ``Ed`` desired voltage.
    ``omega_d`` is the desired frequency deviation in the rotating frame.
    """

    tau: np.ndarray
    kappa: np.ndarray
    chi: np.ndarray
    Pd: np.ndarray
    Qd: np.ndarray
    Ed: np.ndarray
    omega_d: float = 0.0

    def __post_init__(self):
        n = np.asarray(self.tau).size
        for name in ("tau", "kappa", "chi", "Pd", "Qd", "Ed"):
            arr = _as_vector(getattr(self, name), n, name)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for name in ("tau", "kappa", "chi"):
            if np.any(getattr(self, name) <= 0.0):
                raise ValueError(f"{name} must be strictly positive at every node")
        if np.any(self.Ed <= 0.0):
            raise ValueError("desired voltages Ed must be strictly positive")
        object.__setattr__(self, "omega_d", float(self.omega_d))

    @property
    def n(self) -> int:
        return self.tau.size

    @classmethod
    def uniform(
        cls,
        n: int,
        tau=0.1,
        kappa=1.0,
        chi=0.05,
        Pd=0.0,
        Qd=0.05,
        Ed=1.0,
        omega_d=0.0,
    ) -> "InverterParams":
        """Parameters broadcast over n nodes; defaults follow the common test setup."""
        return cls(
            tau=_as_vector(tau, n, "tau"),
            kappa=_as_vector(kappa, n, "kappa"),
            chi=_as_vector(chi, n, "chi"),
            Pd=_as_vector(Pd, n, "Pd"),
            Qd=_as_vector(Qd, n, "Qd"),
            Ed=_as_vector(Ed, n, "Ed"),
            omega_d=omega_d,
        )

    def with_field(self, name: str, value, node: int | None = None) -> "InverterParams":
        """Functional update of one field, either per-node or for all nodes."""
        if name == "omega_d":
            if node is not None:
                raise ValueError("omega_d is global, cannot address a node")
            return replace(self, omega_d=float(value))
        if name not in ("tau", "kappa", "chi", "Pd", "Qd", "Ed"):
            raise ValueError(f"unknown parameter field {name!r}")
        arr = np.array(getattr(self, name), dtype=float)
        if node is None:
            arr[:] = float(value)
        else:
            if not 0 <= node < self.n:
                raise ValueError(f"node {node} out of range for n={self.n}")
            arr[node] = float(value)
        return replace(self, **{name: arr})

    def to_dict(self) -> dict:
        return {
            "tau": self.tau.tolist(),
            "kappa": self.kappa.tolist(),
            "chi": self.chi.tolist(),
            "Pd": self.Pd.tolist(),
            "Qd": self.Qd.tolist(),
            "Ed": self.Ed.tolist(),
            "omega_d": self.omega_d,
        }

    @classmethod
    def from_dict(cls, data: dict, n: int | None = None) -> "InverterParams":
        if n is None:
            sizes = [np.asarray(data[k]).size for k in ("tau", "kappa", "chi", "Pd", "Qd", "Ed") if k in data]
            n = max(sizes) if sizes else 1
        kwargs = {}
        for k in ("tau", "kappa", "chi", "Pd", "Qd", "Ed"):
            if k in data:
                kwargs[k] = _as_vector(data[k], n, k)
        return cls.uniform(n, **kwargs, omega_d=float(data.get("omega_d", 0.0)))


@dataclass(frozen=True)
class SystemState:
    """Phase angles (rad), frequency deviations (rad/s), voltages (pu) per node."""

    delta: np.ndarray
    omega: np.ndarray
    E: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.delta).size
        for name in ("delta", "omega", "E"):
            arr = _as_vector(getattr(self, name), n, name)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.E <= 0.0):
            raise ValueError("voltage magnitudes must be strictly positive")

    @property
    def n(self) -> int:
        return self.delta.size

    @classmethod
    def flat(cls, n: int, E=1.0) -> "SystemState":
        """Flat start: zero angles and frequencies, voltages at E."""
        return cls(delta=np.zeros(n), omega=np.zeros(n), E=_as_vector(E, n, "E"))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.delta, self.omega, self.E])


def power_injections(state: SystemState, net: GridNetwork) -> tuple[np.ndarray, np.ndarray]:
    """Instantaneous active/reactive power injected at each node.

    Lossless mode::

        P_j = sum_l E_j E_l B[j,l] sin(d_j - d_l)
        Q_j = -sum_l E_j E_l B[j,l] cos(d_j - d_l)

    Lossy mode adds the conductance terms
    ``+ G[j,l] cos(d_j - d_l)`` to P and ``+ G[j,l] sin(d_j - d_l)`` to Q.
    """
    if state.n != net.n:
        raise ValueError(f"state has {state.n} nodes, network has {net.n}")
    dd = state.delta[:, None] - state.delta[None, :]
    EE = state.E[:, None] * state.E[None, :]
    sin_dd = np.sin(dd)
    cos_dd = np.cos(dd)
    P = np.sum(EE * net.B * sin_dd, axis=1)
    Q = -np.sum(EE * net.B * cos_dd, axis=1)
    if not net.lossless:
        P = P + np.sum(EE * net.G * cos_dd, axis=1)
        Q = Q + np.sum(EE * net.G * sin_dd, axis=1)
    return P, Q
