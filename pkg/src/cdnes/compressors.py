"""Compression operators, their contraction constants, and bit accounting.

Three families are provided behind one interface:

* ``quantize``: unbiased b-bit stochastic quantization against the
  q-norm of the message,
* ``topk``: keep the k largest-magnitude coordinates,
* ``normsign``: transmit only the q-norm and the sign pattern.

``identity`` is the lossless operator used by the uncompressed baseline.

Every operator acts on a single vector; :func:`compress_rows` applies it to
each row of a matrix at once, with row ``i`` consuming row ``i`` of the
uniform draws (one agent per row).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FLOAT_BITS = 32
KINDS = ("identity", "quantize", "topk", "normsign")
# keeps delta strictly positive when the quantizer constant is close to 1
_DELTA_FLOOR = 1e-6


class CompressorError(ValueError):
    pass


def _parse_q(q) -> float:
    if isinstance(q, str):
        q = q.strip().lower()
        if q in ("inf", "infinity", "max"):
            return math.inf
        q = float(q)
    q = float(q)
    if q not in (2.0, math.inf):
        raise CompressorError(f"norm index q must be 2 or inf, got {q}")
    return q


@dataclass(frozen=True)
class CompressorSpec:
    kind: str
    d: int
    bits: int | None = None
    k: int | None = None
    q: float = math.inf

    def __post_init__(self):
        if self.kind not in KINDS:
            raise CompressorError(f"unknown compressor kind {self.kind!r}; expected one of {KINDS}")
        if self.d < 1:
            raise CompressorError(f"message dimension must be positive, got {self.d}")
        object.__setattr__(self, "q", _parse_q(self.q))
        if self.kind == "quantize" and (self.bits is None or self.bits < 1):
            raise CompressorError(f"quantize needs bits >= 1, got {self.bits}")
        if self.kind == "topk" and (self.k is None or not 1 <= self.k <= self.d):
            raise CompressorError(f"topk needs 1 <= k <= d={self.d}, got {self.k}")

    @property
    def stochastic(self) -> bool:
        return self.kind == "quantize"

    @property
    def lossless(self) -> bool:
        return self.kind == "identity" or (self.kind == "topk" and self.k == self.d)

    def label(self) -> str:
        if self.kind == "quantize":
            return f"quantize_b{self.bits}_q{_qname(self.q)}"
        if self.kind == "topk":
            return f"top{self.k}"
        if self.kind == "normsign":
            return f"normsign_q{_qname(self.q)}"
        return "identity"

    def with_dim(self, d: int) -> "CompressorSpec":
        return CompressorSpec(self.kind, d, self.bits, self.k, self.q)


def _qname(q: float) -> str:
    return "inf" if math.isinf(q) else str(int(q))


@dataclass(frozen=True)
class CompressedMessage:
    payload: np.ndarray
    bit_cost: int


def quantize(x, bits: int, q: float, u) -> np.ndarray:
    """b-bit q-norm stochastic quantization with explicit uniform draws ``u``.

    Returns ``||x||_q / 2^(b-1) * sign(x) * floor(2^(b-1) |x| / ||x||_q + u)``
    and the zero vector when ``||x||_q = 0``.
    """
    x = np.asarray(x, dtype=float)
    return _quantize_rows(x[None, :], bits, q, np.asarray(u, dtype=float)[None, :])[0]


def _row_norms(v: np.ndarray, q: float) -> np.ndarray:
    if math.isinf(q):
        return np.max(np.abs(v), axis=1)
    # scale by the max entry so tiny or huge rows neither underflow nor overflow
    peak = np.max(np.abs(v), axis=1)
    safe = np.where(peak > 0, peak, 1.0)[:, None]
    return peak * np.sqrt(np.einsum("ij,ij->i", v / safe, v / safe))


def _quantize_rows(v, bits, q, u):
    levels = 2.0 ** (bits - 1)
    norms = _row_norms(v, q)
    safe = np.where(norms > 0, norms, 1.0)[:, None]
    out = (safe / levels) * np.sign(v) * np.floor(levels * np.abs(v) / safe + u)
    out[norms == 0] = 0.0
    return out


def _topk_rows(v, k):
    if k == v.shape[1]:
        return v.copy()
    # stable sort on -|v| keeps the lower index first among equal magnitudes
    keep = np.argsort(-np.abs(v), axis=1, kind="stable")[:, :k]
    out = np.zeros_like(v)
    rows = np.arange(v.shape[0])[:, None]
    out[rows, keep] = v[rows, keep]
    return out


def _normsign_rows(v, q):
    return _row_norms(v, q)[:, None] * np.sign(v)


def compress_rows(spec: CompressorSpec, v, rng: np.random.Generator | None = None) -> np.ndarray:
    """Compress every row of ``v`` independently."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 2 or v.shape[1] != spec.d:
        raise CompressorError(f"expected rows of dimension {spec.d}, got shape {v.shape}")
    if spec.kind == "identity":
        return v.copy()
    if spec.kind == "topk":
        return _topk_rows(v, spec.k)
    if spec.kind == "normsign":
        return _normsign_rows(v, spec.q)
    if rng is None:
        raise CompressorError("stochastic quantization needs a random generator")
    return _quantize_rows(v, spec.bits, spec.q, rng.random(v.shape))


def compress(spec: CompressorSpec, x, rng: np.random.Generator | None = None) -> CompressedMessage:
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.d,):
        raise CompressorError(f"expected a vector of dimension {spec.d}, got shape {x.shape}")
    return CompressedMessage(compress_rows(spec, x[None, :], rng)[0], bit_cost(spec))


def constants(spec: CompressorSpec) -> tuple[float, float, float]:
    """``(C, r, delta)`` for the error and r-scaling bounds of the operator.

    For the quantizer the variance constant is ``d / 4^b`` when ``q = inf``;
    for ``q = 2`` we use the standard ``min(d/s^2, sqrt(d)/s)`` bound with
    ``s = 2^(b-1)`` levels, which is only checked empirically. An unbiased
    operator with constant C < 1 is contractive with ``r = 1, delta = 1 - C``;
    otherwise scaling by ``r = 1 + C`` gives ``delta = 1 / (1 + C)``.
    """
    d = spec.d
    if spec.kind == "identity":
        return 0.0, 1.0, 1.0
    if spec.kind == "topk":
        return 1.0 - spec.k / d, 1.0, spec.k / d
    if spec.kind == "normsign":
        return float(d - 1), float(d), 1.0 / d
    if math.isinf(spec.q):
        c = d / 4.0**spec.bits
    else:
        s = 2.0 ** (spec.bits - 1)
        c = min(d / s**2, math.sqrt(d) / s)
    if c < 1.0:
        return c, 1.0, 1.0 - min(c, 1.0 - _DELTA_FLOOR)
    return c, 1.0 + c, 1.0 / (1.0 + c)


def bit_cost(spec: CompressorSpec) -> int:
    """Bits for one transmitted message, independent of its values.

    identity: 32 d; quantize: 32 + d (1 + b); topk: k (32 + ceil(log2 d));
    normsign: 32 + d.
    """
    d = spec.d
    if spec.kind == "identity":
        return FLOAT_BITS * d
    if spec.kind == "quantize":
        return FLOAT_BITS + d * (1 + spec.bits)
    if spec.kind == "topk":
        index_bits = math.ceil(math.log2(d)) if d > 1 else 0
        return spec.k * (FLOAT_BITS + index_bits)
    return FLOAT_BITS + d


def verify_assumption4(
    spec: CompressorSpec,
    trials: int,
    rng: np.random.Generator,
    draws: int = 400,
) -> dict:
    """Empirical check of the two error bounds on random nonzero inputs.

    Deterministic operators are evaluated exactly; for the quantizer each
    expectation is a Monte Carlo mean over ``draws`` compressions. The
    report holds the largest observed ratios next to the claimed constants.
    """
    if trials < 1:
        raise CompressorError("trials must be >= 1")
    c, r, delta = constants(spec)
    max_c = max_delta = 0.0
    for _ in range(trials):
        x = rng.standard_normal(spec.d) * rng.exponential(1.0, spec.d)
        while not np.any(x):
            x = rng.standard_normal(spec.d)
        reps = draws if spec.stochastic else 1
        out = compress_rows(spec, np.broadcast_to(x, (reps, spec.d)), rng)
        xx = float(x @ x)
        err = np.mean(np.sum((out - x) ** 2, axis=1)) / xx
        err_r = np.mean(np.sum((out / r - x) ** 2, axis=1)) / xx
        max_c = max(max_c, float(err))
        max_delta = max(max_delta, float(err_r))
    return {
        "kind": spec.label(),
        "d": spec.d,
        "trials": trials,
        "C": c,
        "r": r,
        "delta": delta,
        "max_ratio_C": max_c,
        "max_ratio_delta": max_delta,
        "holds": max_c <= c and max_delta <= 1.0 - delta,
    }
