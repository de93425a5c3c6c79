"""Communication topologies and doubly stochastic mixing matrices."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

STOCHASTIC_TOL = 1e-12
MAX_RESAMPLE = 1000


class GraphError(ValueError):
    """Raised for invalid topologies or mixing matrices."""


@dataclass(frozen=True)
class Topology:
    """Undirected graph on agents ``1..n``.

    Edges are stored as sorted 1-indexed pairs ``(i, j)`` with ``i < j``.
    """

    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n < 1:
            raise GraphError(f"agent count must be positive, got {self.n}")
        norm = set()
        for i, j in self.edges:
            if i == j:
                raise GraphError(f"self-loop on agent {i}")
            if not (1 <= i <= self.n and 1 <= j <= self.n):
                raise GraphError(f"edge ({i}, {j}) outside 1..{self.n}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            a[i - 1, j - 1] = a[j - 1, i - 1] = True
        return a

    def neighbors(self, i: int) -> list[int]:
        """Sorted 1-indexed neighbours of agent ``i``."""
        return sorted({b if a == i else a for a, b in self.edges if i in (a, b)})

    def degrees(self) -> np.ndarray:
        return self.adjacency().sum(axis=1)

    def is_connected(self) -> bool:
        adj = self.adjacency()
        seen = np.zeros(self.n, dtype=bool)
        seen[0] = True
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v in np.flatnonzero(adj[u] & ~seen):
                seen[v] = True
                queue.append(v)
        return bool(seen.all())

    def to_edgelist(self) -> str:
        return "".join(f"{i} {j}\n" for i, j in sorted(self.edges))

    @classmethod
    def from_edgelist(cls, text: str, n: int | None = None) -> "Topology":
        edges = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphError(f"line {lineno}: expected 'i j', got {line!r}")
            edges.append((int(parts[0]), int(parts[1])))
        if n is None:
            n = max((max(e) for e in edges), default=1)
        return cls(n, frozenset(edges))

    def save(self, path) -> None:
        Path(path).write_text(self.to_edgelist())

    @classmethod
    def load(cls, path, n: int | None = None) -> "Topology":
        return cls.from_edgelist(Path(path).read_text(), n)


def path_graph(n: int) -> Topology:
    return Topology(n, frozenset((i, i + 1) for i in range(1, n)))


def complete_graph(n: int) -> Topology:
    return Topology(n, frozenset((i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)))


def random_connected_graph(n: int, edge_prob: float, seed: int) -> Topology:
    """Erdos-Renyi graph, resampled until connected.

    Deterministic for a fixed ``seed``. Gives up after ``MAX_RESAMPLE``
    draws, which happens when ``edge_prob`` is far below the connectivity
    threshold ``log(n)/n``.
    """
    if n < 2:
        raise GraphError(f"need at least 2 agents, got {n}")
    if not 0.0 < edge_prob <= 1.0:
        raise GraphError(f"edge_prob must lie in (0, 1], got {edge_prob}")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    for _ in range(MAX_RESAMPLE):
        keep = rng.random(iu.size) < edge_prob
        topo = Topology(n, frozenset(zip((iu[keep] + 1).tolist(), (ju[keep] + 1).tolist())))
        if topo.is_connected():
            return topo
    raise GraphError(
        f"no connected graph after {MAX_RESAMPLE} draws with n={n}, "
        f"edge_prob={edge_prob}; threshold is about log(n)/n={np.log(n) / n:.3f}"
    )


def spectral_gap(w) -> tuple[float, float]:
    """Return ``(rho_w, s)`` for a symmetric doubly stochastic ``w``.

    ``rho_w`` is the spectral radius of ``W - 11^T/n`` and ``s = 1 - rho_w``.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise GraphError(f"mixing matrix must be square, got shape {w.shape}")
    if not np.allclose(w, w.T, rtol=0.0, atol=STOCHASTIC_TOL):
        raise GraphError("mixing matrix is not symmetric")
    n = w.shape[0]
    deflated = w - np.full((n, n), 1.0 / n)
    rho = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (deflated + deflated.T)))))
    return rho, 1.0 - rho


@dataclass(frozen=True)
class MixingMatrix:
    w: np.ndarray
    rho_w: float
    s: float
    topology: Topology | None = None

    @classmethod
    def from_array(cls, w, topology: Topology | None = None) -> "MixingMatrix":
        w = np.array(w, dtype=float)
        w.setflags(write=False)
        rho, s = spectral_gap(w)
        return cls(w, rho, s, topology)

    @property
    def n(self) -> int:
        return self.w.shape[0]

    def norm_i_minus_w(self, kind: str = "fro") -> float:
        """``||I - W||`` in Frobenius (default) or spectral norm."""
        m = np.eye(self.n) - self.w
        if kind == "fro":
            return float(np.linalg.norm(m, "fro"))
        if kind == "spectral":
            return float(np.linalg.norm(m, 2))
        raise ValueError(f"unknown norm kind {kind!r}")

    def lazy(self, gamma: float) -> np.ndarray:
        """``(1 - gamma) I + gamma W``."""
        return (1.0 - gamma) * np.eye(self.n) + gamma * self.w

    def validate(self) -> None:
        """Check every mixing-matrix invariant; raise :class:`GraphError` on failure."""
        w = self.w
        if np.any(w < 0):
            raise GraphError("mixing matrix has negative entries")
        if not np.allclose(w, w.T, rtol=0.0, atol=STOCHASTIC_TOL):
            raise GraphError("mixing matrix is not symmetric")
        row_err = np.max(np.abs(w.sum(axis=1) - 1.0))
        col_err = np.max(np.abs(w.sum(axis=0) - 1.0))
        if max(row_err, col_err) > STOCHASTIC_TOL:
            raise GraphError(f"not doubly stochastic: max row/col sum error {max(row_err, col_err):.3e}")
        if self.topology is not None:
            if not self.topology.is_connected():
                raise GraphError("topology is not connected")
            allowed = self.topology.adjacency() | np.eye(self.n, dtype=bool)
            if np.any((w > 0) & ~allowed):
                raise GraphError("positive weight on a non-edge")
        if not self.s > 0.0:
            raise GraphError(f"spectral gap s={self.s:.3e} is not positive (rho_w={self.rho_w:.6f}); W is unusable")

    def to_csv(self) -> str:
        return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in self.w)

    def save_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())


def max_degree_weights(topo: Topology) -> MixingMatrix:
    """Uniform weight ``1/max_degree`` on edges, remainder on the diagonal."""
    if not topo.is_connected():
        raise GraphError("max-degree weights need a connected topology")
    adj = topo.adjacency().astype(float)
    deg = adj.sum(axis=1)
    w = adj / deg.max()
    # exact in integers, so the max-degree rows get a diagonal of exactly 0
    w[np.diag_indices(topo.n)] = (deg.max() - deg) / deg.max()
    return MixingMatrix.from_array(w, topo)


def metropolis_weights(topo: Topology) -> MixingMatrix:
    """Metropolis-Hastings weights ``1/(1 + max(d_i, d_j))``.

    Convenience rule only; not used by the reproduction experiments.
    """
    if not topo.is_connected():
        raise GraphError("Metropolis weights need a connected topology")
    deg = topo.degrees()
    w = np.zeros((topo.n, topo.n))
    for i, j in topo.edges:
        w[i - 1, j - 1] = w[j - 1, i - 1] = 1.0 / (1.0 + max(deg[i - 1], deg[j - 1]))
    w[np.diag_indices(topo.n)] = 1.0 - w.sum(axis=1)
    return MixingMatrix.from_array(w, topo)


WEIGHT_RULES = {"max_degree": max_degree_weights, "metropolis": metropolis_weights}
