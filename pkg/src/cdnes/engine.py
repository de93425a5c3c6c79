"""Synchronous simulation of compressed distributed Nash-equilibrium seeking.

All agents are simulated in lock step in compact matrix form. Row ``i`` of
every n x D matrix belongs to agent ``i``:

* ``X``: the agent's estimate of the joint action,
* ``H``: its reference point, tracking ``X`` so that only the difference
  ``X - H`` has to be compressed,
* ``Hw``: the neighbour-weighted combination of references, ``W H``.

One iteration::

    Q      = C(X - H)                 row-wise, one message per agent
    Xhat   = H + Q
    Xhat_w = Hw + W Q
    H      = (1 - alpha) H + alpha Xhat
    Hw     = (1 - alpha) Hw + alpha Xhat_w
    X      = X - gamma (Xhat - Xhat_w) - eta F(X)

where ``F(X)`` places ``grad_i J_i(X[i])`` in row i, block i.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .compressors import CompressorSpec, bit_cost, compress_rows, constants
from .games import Game
from .graph import MixingMatrix

DIVERGENCE_LIMIT = 1e12
TRACE_HEADER = ("k", "residual", "consensus_err", "compress_err", "mapping_norm", "cum_bits")


class EngineError(ValueError):
    pass


class DivergenceError(RuntimeError):
    """Raised when an iterate stops being finite or exceeds the magnitude guard.

    ``trace`` holds every record produced before the failure.
    """

    def __init__(self, k: int, detail: str, trace: "Trace | None" = None):
        super().__init__(f"divergence at iteration {k}: {detail}")
        self.k = k
        self.trace = trace


@dataclass(frozen=True)
class AlgoConfig:
    eta: float
    gamma: float = 1.0
    alpha: float = 1.0
    K: int = 1000
    seed: int = 0
    stop_tol: float | None = None
    per_edge_bits: bool = False
    # the reproduction runs use alpha = 1 with operators whose r exceeds 1
    enforce_alpha_bound: bool = True

    def validate(self, r: float = 1.0) -> None:
        if not self.eta > 0:
            raise EngineError(f"eta must be positive, got {self.eta}")
        if not 0 < self.gamma <= 1:
            raise EngineError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not self.alpha > 0:
            raise EngineError(f"alpha must be positive, got {self.alpha}")
        if self.enforce_alpha_bound and self.alpha * r > 1 + 1e-12:
            raise EngineError(f"alpha={self.alpha} violates alpha <= 1/r = {1 / r:.6g}")
        if self.K < 0:
            raise EngineError(f"K must be non-negative, got {self.K}")


@dataclass(frozen=True)
class NetworkState:
    X: np.ndarray
    H: np.ndarray
    Hw: np.ndarray
    k: int = 0
    cum_bits: int = 0


@dataclass
class Trace:
    k: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    consensus_err: list = field(default_factory=list)
    compress_err: list = field(default_factory=list)
    mapping_norm: list = field(default_factory=list)
    cum_bits: list = field(default_factory=list)
    # per-step structural checks, filled only when requested
    hw_err: list = field(default_factory=list)
    mean_err: list = field(default_factory=list)
    status: str = "running"
    label: str = ""
    final_state: NetworkState | None = None

    def __len__(self) -> int:
        return len(self.k)

    def append(self, k, residual, consensus_err, compress_err, mapping_norm, cum_bits):
        self.k.append(k)
        self.residual.append(residual)
        self.consensus_err.append(consensus_err)
        self.compress_err.append(compress_err)
        self.mapping_norm.append(mapping_norm)
        self.cum_bits.append(cum_bits)

    def rows(self, columns=TRACE_HEADER):
        cols = [getattr(self, c) for c in columns]
        return list(zip(*cols))

    def to_csv(self, columns=TRACE_HEADER) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in self.rows(columns):
            writer.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def write_csv(self, path, columns=TRACE_HEADER) -> None:
        Path(path).write_text(self.to_csv(columns))

    def first_below(self, threshold: float, column: str = "residual") -> int | None:
        """Index of the first record whose ``column`` is at or below ``threshold``."""
        for idx, v in enumerate(getattr(self, column)):
            if v <= threshold:
                return idx
        return None


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def iteration_stream(seed: int, k: int) -> np.random.Generator:
    """Counter-based random stream for iteration ``k``.

    Agent ``i`` consumes row ``i`` of a single ``(n, d)`` uniform draw, so
    every (agent, iteration) pair reads a disjoint block of the Philox
    counter space regardless of evaluation order.
    """
    key = np.random.SeedSequence([seed, 0x5EED]).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=np.array([0, 0, 0, k], dtype=np.uint64)))


def init(game: Game, mix: MixingMatrix, config: AlgoConfig, X0=None, H0=None) -> NetworkState:
    """Initial state: ``X0`` uniform on [0, 1] from the seed unless given, ``H0 = 0``."""
    n, D = mix.n, game.D
    if game.n != n:
        raise EngineError(f"game has {game.n} players but mixing matrix has {n} agents")
    if X0 is None:
        X0 = np.random.default_rng([config.seed, 0]).random((n, D))
    X0 = np.array(X0, dtype=float)
    H0 = np.zeros((n, D)) if H0 is None else np.array(H0, dtype=float)
    if X0.shape != (n, D) or H0.shape != (n, D):
        raise EngineError(f"initial values must have shape ({n}, {D})")
    return NetworkState(X0, H0, mix.w @ H0, 0, 0)


def _bits_per_iteration(mix: MixingMatrix, message_bits: int, per_edge: bool) -> int:
    if per_edge and mix.topology is not None:
        return 2 * len(mix.topology.edges) * message_bits
    return mix.n * message_bits


def _check_finite(k, *arrays):
    for name, a in arrays:
        if not np.all(np.isfinite(a)):
            raise DivergenceError(k, f"{name} has non-finite entries")
        peak = float(np.max(np.abs(a))) if a.size else 0.0
        if peak > DIVERGENCE_LIMIT:
            raise DivergenceError(k, f"max |{name}| = {peak:.3e} exceeds {DIVERGENCE_LIMIT:.0e}")


def _advance(state, game, mix, config, Xhat, Xhat_w, bits, F=None):
    a, g = config.alpha, config.gamma
    H = (1.0 - a) * state.H + a * Xhat
    Hw = (1.0 - a) * state.Hw + a * Xhat_w
    if F is None:
        F = game.local_mapping(state.X)
    X = state.X - g * (Xhat - Xhat_w) - config.eta * F
    k = state.k + 1
    _check_finite(k, ("X", X), ("H", H))
    return NetworkState(X, H, Hw, k, state.cum_bits + bits)


def step(state, game, mix, compressor: CompressorSpec, config: AlgoConfig, rng=None, F=None) -> NetworkState:
    """One synchronous iteration with compressed messages."""
    W = mix.w
    Q = compress_rows(compressor, state.X - state.H, rng)
    if compressor.lossless:
        # lossless messages reconstruct X exactly; skipping H + (X - H)
        # keeps the identity run bit-identical to the uncompressed one
        Xhat = state.X
        Xhat_w = W @ state.X
    else:
        Xhat = state.H + Q
        Xhat_w = state.Hw + W @ Q
    bits = _bits_per_iteration(mix, bit_cost(compressor), config.per_edge_bits)
    return _advance(state, game, mix, config, Xhat, Xhat_w, bits, F)


def baseline_step(state, game, mix, config: AlgoConfig, F=None) -> NetworkState:
    """Uncompressed iteration ``X <- X - gamma (I - W) X - eta F(X)``."""
    bits = _bits_per_iteration(mix, 32 * game.D, config.per_edge_bits)
    return _advance(state, game, mix, config, state.X, mix.w @ state.X, bits, F)


def _metrics(state, game, F):
    X = state.X
    xbar = X.mean(axis=0)
    cons = float(np.linalg.norm(X - xbar))
    comp = float(np.linalg.norm(X - state.H))
    mapn = float(np.linalg.norm(F))
    res = float(np.linalg.norm(X - game.known_ne)) if game.known_ne is not None else math.nan
    return res, cons, comp, mapn


def _stop_metric(res, cons, mapn):
    return res if not math.isnan(res) else mapn + cons


def _run(game, mix, config, advance, X0, H0, check_invariants, label):
    state = init(game, mix, config, X0, H0)
    trace = Trace(label=label)
    n = mix.n
    F = game.local_mapping(state.X)
    res, cons, comp, mapn = _metrics(state, game, F)
    trace.append(0, res, cons, comp, mapn, 0)
    try:
        _check_finite(0, ("X", state.X), ("H", state.H))
        for _ in range(config.K):
            if config.stop_tol is not None and _stop_metric(res, cons, mapn) <= config.stop_tol:
                trace.status = "stopped"
                break
            prev = state
            state = advance(prev, F)
            if check_invariants:
                WH = mix.w @ state.H
                scale = max(float(np.linalg.norm(WH)), 1e-300)
                trace.hw_err.append(float(np.linalg.norm(state.Hw - WH)) / scale)
                predicted = prev.X.mean(axis=0) - (config.eta / n) * F.sum(axis=0)
                drift = float(np.linalg.norm(state.X.mean(axis=0) - predicted))
                trace.mean_err.append(drift / max(1.0, float(np.linalg.norm(prev.X))))
            F = game.local_mapping(state.X)
            res, cons, comp, mapn = _metrics(state, game, F)
            trace.append(state.k, res, cons, comp, mapn, state.cum_bits)
        if trace.status == "running":
            trace.status = "completed"
    except DivergenceError as err:
        trace.status = "diverged"
        trace.final_state = state
        err.trace = trace
        raise
    trace.final_state = state
    return trace


def run(
    game: Game,
    mix: MixingMatrix,
    compressor: CompressorSpec,
    config: AlgoConfig,
    X0=None,
    H0=None,
    check_invariants: bool = False,
) -> Trace:
    """Iterate :func:`step` ``config.K`` times or until ``stop_tol`` is met.

    The stop metric is the residual ``||X - 1 x*'||_F`` when the equilibrium
    is known and ``||F(X)||_F + ||X - Xbar||_F`` otherwise. Raises
    :class:`DivergenceError` (carrying the partial trace) on blow-up.
    """
    if compressor.d != game.D:
        raise EngineError(f"compressor dimension {compressor.d} != joint action dimension {game.D}")
    _, r, _ = constants(compressor)
    config.validate(r)

    def advance(state, F):
        rng = iteration_stream(config.seed, state.k) if compressor.stochastic else None
        return step(state, game, mix, compressor, config, rng, F)

    return _run(game, mix, config, advance, X0, H0, check_invariants, compressor.label())


def run_baseline(game: Game, mix: MixingMatrix, config: AlgoConfig, X0=None, H0=None, check_invariants=False) -> Trace:
    """Uncompressed distributed NE seeking; full-precision messages of 32 D bits."""
    config = replace(config, enforce_alpha_bound=False)
    config.validate()
    return _run(
        game, mix, config,
        lambda state, F: baseline_step(state, game, mix, config, F),
        X0, H0, check_invariants, "baseline",
    )
