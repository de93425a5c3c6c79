"""Games with unconstrained vector actions and their partial-gradient oracles.

Players are indexed ``0..n-1`` in code. Player ``i`` owns the block
``x[game.block(i)]`` of the joint action ``x`` of length ``D = sum(dims)``.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


class GameError(ValueError):
    pass


class Game:
    """A game given by per-player partial gradients ``grad_i J_i``.

    Parameters
    ----------
    dims : sequence of int
        Action dimension of every player.
    grad : callable ``(x, i) -> ndarray``
        Partial gradient of player ``i``'s cost with respect to its own
        block, evaluated at a full joint action ``x``.
    mu, L : float
        Strong-monotonicity constant of the game mapping and the largest
        per-player Lipschitz constant of the partial gradients.
    known_ne : ndarray, optional
        The Nash equilibrium, when it is known in closed form.
    cost : callable ``(x, i) -> float``, optional
        Player costs; only used to cross-check the gradient oracle.
    """

    def __init__(
        self,
        dims,
        grad: Callable[[np.ndarray, int], np.ndarray],
        mu: float,
        L: float,
        known_ne=None,
        cost: Callable[[np.ndarray, int], float] | None = None,
        name: str = "game",
    ):
        self.dims = tuple(int(d) for d in dims)
        if not self.dims or min(self.dims) < 1:
            raise GameError(f"every player needs a positive action dimension, got {self.dims}")
        if not mu > 0:
            raise GameError(f"mu must be positive, got {mu}")
        if L < mu:
            raise GameError(f"need L >= mu, got L={L}, mu={mu}")
        self._grad = grad
        self.mu = float(mu)
        self.L = float(L)
        self.cost = cost
        self.name = name
        self.offsets = np.concatenate([[0], np.cumsum(self.dims)])
        self.known_ne = None if known_ne is None else np.asarray(known_ne, dtype=float)
        if self.known_ne is not None and self.known_ne.shape != (self.D,):
            raise GameError(f"known_ne has shape {self.known_ne.shape}, expected ({self.D},)")

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def D(self) -> int:
        return int(self.offsets[-1])

    def block(self, i: int) -> slice:
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))

    def grad(self, x, i: int) -> np.ndarray:
        return np.asarray(self._grad(np.asarray(x, dtype=float), i), dtype=float)

    def own_gradients(self, X) -> np.ndarray:
        """Stack ``grad_i(X[i], i)`` over players into a length-D vector.

        Row ``i`` of ``X`` is player ``i``'s estimate of the joint action.
        Subclasses override this with a vectorised version.
        """
        out = np.empty(self.D)
        for i in range(self.n):
            out[self.block(i)] = self.grad(X[i], i)
        return out

    def local_mapping(self, X) -> np.ndarray:
        """The n x D matrix with ``grad_i(X[i], i)`` in row i, block i, zeros elsewhere."""
        X = np.asarray(X, dtype=float)
        f = self.own_gradients(X)
        out = np.zeros_like(X)
        for i in range(self.n):
            b = self.block(i)
            out[i, b] = f[b]
        return out


def game_mapping(game: Game, x) -> np.ndarray:
    """All partial gradients evaluated at the same joint action ``x``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (game.D,):
        raise GameError(f"expected joint action of length {game.D}, got shape {x.shape}")
    return np.concatenate([game.grad(x, i) for i in range(game.n)])


def _block_lipschitz(jac: np.ndarray, game_dims) -> float:
    offsets = np.concatenate([[0], np.cumsum(game_dims)])
    return max(np.linalg.norm(jac[offsets[i]:offsets[i + 1]], 2) for i in range(len(game_dims)))


class ConnectivityGame(Game):
    """Sensor connectivity-control game with planar positions.

    Player ``i`` (1-based label ``p = i + 1``) pays
    ``x_i' R_p x_i + x_i' r_p + b_p + c ||x_i - x_{next(i)}||^2`` with
    ``R_p = p I``, ``r_p = p 1``, ``b_p = p``, ``c = 1`` and ``next`` the
    cyclic successor. The equilibrium is every coordinate at ``-0.5``.
    """

    def __init__(self, n: int):
        if n < 2:
            raise GameError(f"connectivity game needs n >= 2, got {n}")
        self.labels = np.arange(1, n + 1, dtype=float)
        self.succ = np.roll(np.arange(n), -1)
        jac = self.jacobian_for(n)
        sym = 0.5 * (jac + jac.T)
        mu = float(np.linalg.eigvalsh(sym)[0])
        L = _block_lipschitz(jac, [2] * n)
        super().__init__(
            [2] * n,
            self._grad_one,
            mu,
            L,
            known_ne=np.full(2 * n, -0.5),
            cost=self._cost_one,
            name=f"connectivity{n}",
        )

    @staticmethod
    def jacobian_for(n: int) -> np.ndarray:
        """Constant Jacobian of the stacked game mapping."""
        jac = np.zeros((2 * n, 2 * n))
        for i in range(n):
            j = (i + 1) % n
            for a in range(2):
                jac[2 * i + a, 2 * i + a] += 2.0 * (i + 1) + 2.0
                jac[2 * i + a, 2 * j + a] -= 2.0
        return jac

    def _grad_one(self, x, i):
        p = self.labels[i]
        xi = x[2 * i:2 * i + 2]
        j = self.succ[i]
        xj = x[2 * j:2 * j + 2]
        return 2.0 * p * xi + p + 2.0 * (xi - xj)

    def _cost_one(self, x, i):
        p = self.labels[i]
        xi = x[2 * i:2 * i + 2]
        j = self.succ[i]
        xj = x[2 * j:2 * j + 2]
        return float(p * xi @ xi + p * xi.sum() + p + np.sum((xi - xj) ** 2))

    def own_gradients(self, X):
        n = self.n
        idx = np.arange(n)
        Xb = np.asarray(X, dtype=float).reshape(n, n, 2)
        own = Xb[idx, idx]
        nxt = Xb[idx, self.succ]
        p = self.labels[:, None]
        return (2.0 * p * own + p + 2.0 * (own - nxt)).reshape(-1)


def connectivity_game(n: int) -> ConnectivityGame:
    return ConnectivityGame(n)


class LinearQuadraticGame(Game):
    """Game with affine mapping ``f(x) = M x + b``."""

    def __init__(self, M, b, dims=None):
        M = np.array(M, dtype=float)
        b = np.array(b, dtype=float).reshape(-1)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] != b.size:
            raise GameError(f"incompatible shapes M={M.shape}, b={b.shape}")
        dims = [1] * b.size if dims is None else list(dims)
        if sum(dims) != b.size:
            raise GameError(f"dims {dims} do not add up to {b.size}")
        lam_min = float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])
        if not lam_min > 0:
            raise GameError(f"mapping is not strongly monotone: lambda_min((M+M^T)/2) = {lam_min:.6g}")
        self.M = M
        self.b = b
        L = float(np.linalg.norm(M, 2))
        ne = np.linalg.solve(M, -b)
        super().__init__(dims, self._grad_one, lam_min, L, known_ne=ne, name="lq")
        diag_sym = all(np.allclose(M[self.block(i), self.block(i)], M[self.block(i), self.block(i)].T) for i in range(self.n))
        if diag_sym:
            self.cost = self._cost_one

    def _grad_one(self, x, i):
        blk = self.block(i)
        return self.M[blk] @ x + self.b[blk]

    def _cost_one(self, x, i):
        blk = self.block(i)
        xi = x[blk]
        rest = self.M[blk] @ x - self.M[blk, blk] @ xi
        return float(0.5 * xi @ self.M[blk, blk] @ xi + xi @ (rest + self.b[blk]))

    def own_gradients(self, X):
        full = np.asarray(X, dtype=float) @ self.M.T + self.b
        out = np.empty(self.D)
        for i in range(self.n):
            blk = self.block(i)
            out[blk] = full[i, blk]
        return out


def lq_game(M, b, dims=None) -> LinearQuadraticGame:
    return LinearQuadraticGame(M, b, dims)


def estimate_constants(game: Game, samples: int, radius: float = 10.0, rng=None) -> tuple[float, float]:
    """Sampled one-sided estimates ``(mu_hat, L_hat)``.

    Pairs are drawn uniformly in ``[-radius, radius]^D``, half of them
    differing along a single coordinate axis. ``mu_hat`` is the smallest
    observed monotonicity ratio and so can only over-estimate the true
    constant; ``L_hat`` is the largest per-player gradient ratio and can only
    under-estimate it.
    """
    if samples < 2:
        raise GameError("need at least 2 samples")
    rng = np.random.default_rng(rng)
    mu_hat, L_hat = np.inf, 0.0
    for s in range(samples):
        x = rng.uniform(-radius, radius, game.D)
        if s % 2:
            y = x.copy()
            y[(s // 2) % game.D] += rng.uniform(-radius, radius)
        else:
            y = rng.uniform(-radius, radius, game.D)
        diff = x - y
        dist2 = float(diff @ diff)
        if dist2 == 0.0:
            continue
        fx, fy = game_mapping(game, x), game_mapping(game, y)
        mu_hat = min(mu_hat, float(diff @ (fx - fy)) / dist2)
        dist = np.sqrt(dist2)
        for i in range(game.n):
            blk = game.block(i)
            L_hat = max(L_hat, float(np.linalg.norm(fx[blk] - fy[blk])) / dist)
    return mu_hat, L_hat
