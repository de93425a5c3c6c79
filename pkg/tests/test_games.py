import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cdnes.games import Game, GameError, connectivity_game, estimate_constants, game_mapping, lq_game


def _fd_grad(game, x, i, h=1e-6):
    blk = game.block(i)
    g = np.zeros(blk.stop - blk.start)
    for a, idx in enumerate(range(blk.start, blk.stop)):
        e = np.zeros_like(x)
        e[idx] = h
        g[a] = (game.cost(x + e, i) - game.cost(x - e, i)) / (2 * h)
    return g


@pytest.mark.parametrize("n", [2, 3, 10, 50])
def test_connectivity_constants(n):
    g = connectivity_game(n)
    assert g.D == 2 * n and g.n == n
    # block row is [(2p + 2) I, -2 I] for the last player p = n
    assert g.L == pytest.approx(np.hypot(2 * n + 2, 2), rel=1e-13)
    assert 0 < g.mu <= 4


def test_connectivity_mu_frozen():
    assert connectivity_game(10).mu == pytest.approx(3.504298100550773, rel=1e-12)
    assert connectivity_game(50).mu == pytest.approx(3.5407600816803835, rel=1e-12)


def test_connectivity_equilibrium_is_minus_half():
    g = connectivity_game(7)
    np.testing.assert_array_equal(g.known_ne, -0.5)
    np.testing.assert_allclose(game_mapping(g, g.known_ne), 0, atol=1e-14)


def test_connectivity_gradient_matches_cost():
    g = connectivity_game(5)
    x = np.random.default_rng(3).standard_normal(g.D)
    for i in range(g.n):
        np.testing.assert_allclose(g.grad(x, i), _fd_grad(g, x, i), rtol=1e-6, atol=1e-6)


def test_connectivity_gradient_hand_computed():
    g = connectivity_game(3)
    x = np.array([1.0, 2.0, 0.0, -1.0, 3.0, 3.0])
    # player 1 (p = 1): 2*(1,2) + 1 + 2*((1,2) - (0,-1))
    np.testing.assert_allclose(g.grad(x, 0), [5.0, 11.0])
    # player 3 (p = 3) wraps to player 1
    np.testing.assert_allclose(g.grad(x, 2), [6 * 3 + 3 + 2 * 2, 6 * 3 + 3 + 2 * 1])


def test_vectorised_own_gradients_match_loop():
    for g in (connectivity_game(6), lq_game(np.diag([2.0, 3.0, 4.0]) + 0.1, np.ones(3), dims=[2, 1])):
        X = np.random.default_rng(0).standard_normal((g.n, g.D))
        np.testing.assert_allclose(g.own_gradients(X), Game.own_gradients(g, X), atol=1e-13)


def test_local_mapping_block_layout():
    g = connectivity_game(3)
    X = np.arange(18, dtype=float).reshape(3, 6)
    F = g.local_mapping(X)
    for i in range(3):
        blk = g.block(i)
        np.testing.assert_allclose(F[i, blk], g.grad(X[i], i))
        mask = np.ones(6, bool)
        mask[blk] = False
        assert not F[i, mask].any()


def test_lq_oracle_game():
    g = lq_game([[2.0, 1.0], [0.0, 2.0]], [-3.0, -4.0])
    np.testing.assert_allclose(g.known_ne, [0.5, 2.0], atol=1e-15)
    assert g.mu == pytest.approx(1.5)
    # M^T M = [[4, 2], [2, 5]]
    assert g.L == pytest.approx(np.sqrt((9 + np.sqrt(17)) / 2), rel=1e-14)
    np.testing.assert_allclose(game_mapping(g, g.known_ne), 0, atol=1e-14)


def test_lq_cost_gradient_consistency():
    M = np.array([[3.0, 0.5, 0.2], [0.5, 3.0, -0.1], [0.0, 0.4, 2.0]])
    g = lq_game(M, [1.0, 2.0, 3.0], dims=[2, 1])
    assert g.cost is not None
    x = np.random.default_rng(4).standard_normal(3)
    for i in range(g.n):
        np.testing.assert_allclose(g.grad(x, i), _fd_grad(g, x, i), rtol=1e-6, atol=1e-6)


def test_lq_without_symmetric_diagonal_blocks_has_no_cost():
    g = lq_game([[2.0, 1.0], [0.0, 2.0]], [0.0, 0.0], dims=[2])
    assert g.cost is None


def test_lq_rejects_non_monotone():
    with pytest.raises(GameError, match="lambda_min"):
        lq_game([[1.0, 3.0], [-0.0, 1.0]], [0.0, 0.0])
    with pytest.raises(GameError):
        lq_game(np.eye(2), [1.0, 2.0, 3.0])
    with pytest.raises(GameError):
        lq_game(np.eye(2), [1.0, 2.0], dims=[3])


def test_game_argument_checks():
    grad = lambda x, i: x
    with pytest.raises(GameError):
        Game([1], grad, 0.0, 1.0)
    with pytest.raises(GameError):
        Game([1], grad, 2.0, 1.0)
    with pytest.raises(GameError):
        Game([0], grad, 1.0, 1.0)
    with pytest.raises(GameError):
        Game([1, 1], grad, 1.0, 1.0, known_ne=[0.0])
    with pytest.raises(GameError):
        game_mapping(Game([1], grad, 1.0, 1.0), [1.0, 2.0])
    with pytest.raises(GameError):
        connectivity_game(1)


def test_estimate_constants_brackets_truth():
    g = connectivity_game(4)
    mu_hat, L_hat = estimate_constants(g, 400, rng=0)
    assert mu_hat >= g.mu - 1e-9
    assert L_hat <= g.L + 1e-9
    # axis-aligned pairs recover a good fraction of L
    assert L_hat >= 0.5 * g.L
    with pytest.raises(GameError):
        estimate_constants(g, 1)


@settings(max_examples=100, deadline=None)
@given(
    x=arrays(np.float64, 12, elements=st.floats(-50, 50)),
    y=arrays(np.float64, 12, elements=st.floats(-50, 50)),
)
def test_connectivity_strong_monotonicity(x, y):
    g = connectivity_game(6)
    diff = x - y
    lhs = diff @ (game_mapping(g, x) - game_mapping(g, y))
    assert lhs >= g.mu * (diff @ diff) - 1e-8 * (1 + diff @ diff)
    for i in range(g.n):
        blk = g.block(i)
        gap = np.linalg.norm(game_mapping(g, x)[blk] - game_mapping(g, y)[blk])
        assert gap <= g.L * np.linalg.norm(diff) + 1e-8
