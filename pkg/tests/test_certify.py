import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cdnes.certify import (
    CertificateError,
    build_A,
    certify,
    certify_setup,
    default_tau3,
    margins,
    rate_constants,
    spectral_radius_3x3,
)
from cdnes.compressors import CompressorSpec, constants
from cdnes.engine import AlgoConfig, run
from cdnes.games import lq_game
from cdnes.graph import max_degree_weights, metropolis_weights, path_graph


def test_spectral_radius_diagonal():
    assert spectral_radius_3x3(np.diag([0.5, 0.3, 0.1])) == pytest.approx(0.5, abs=1e-12)


def test_spectral_radius_cyclic():
    A = [[0, 1, 0], [0, 0, 1], [0.125, 0, 0]]
    assert spectral_radius_3x3(A) == pytest.approx(0.5, abs=1e-12)


def test_spectral_radius_shape_check():
    with pytest.raises(ValueError):
        spectral_radius_3x3(np.eye(2))


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (3, 3), elements=st.floats(0, 10)))
def test_spectral_radius_matches_eigensolver(A):
    expected = np.max(np.abs(np.linalg.eigvals(A)))
    assert spectral_radius_3x3(A) == pytest.approx(expected, rel=1e-7, abs=1e-7)


@settings(max_examples=200, deadline=None)
@given(
    arrays(np.float64, (3, 3), elements=st.floats(0, 5)),
    arrays(np.float64, 3, elements=st.floats(1e-3, 1e3)),
)
def test_positive_vector_test_is_sound(A, eps):
    # the smallest theta passing A eps <= theta eps bounds the spectral radius
    theta = float(np.max(A @ eps / eps))
    assert np.all(margins(A, eps, theta * (1 + 1e-15)) >= -1e-9 * theta * eps)
    assert spectral_radius_3x3(A) <= theta * (1 + 1e-9) + 1e-12


def _path3_setup():
    n, mu, L = 3, 2.0, 2.0
    mix = max_degree_weights(path_graph(3))
    return n, mu, L, mix.s, mix.norm_i_minus_w()


def test_vanishing_steps_limit():
    n, mu, L, s, nf = _path3_setup()
    A = build_A(n, mu, L, s, nf, 0.5, 1.0, 1.0, 0.5, 1e-14, 1e-16)
    cx = default_tau3(1.0, 1.0, 0.5) * 0.5
    np.testing.assert_allclose(A, [[1, 0, 0], [0, 1, 0], [0, 0, cx]], atol=1e-12)


def test_identity_decouples_third_state():
    n, mu, L, s, nf = _path3_setup()
    A = build_A(n, mu, L, s, nf, 0.0, 1.0, 1.0, 1.0, 0.5, 0.01)
    assert A[1, 2] == 0.0 and A[2, 2] == 0.0
    assert A[0, 2] == 0.0
    k = rate_constants(n, mu, L, s, nf, 0.0, 1.0, 1.0, 1.0, 0.5, 0.01, 2.0)
    assert float(k.c_x) == 0.0 and float(k.c3) == 0.0 and float(k.c5) == 0.0


def test_path3_matrix_against_direct_formulas():
    n, mu, L, s, nf = _path3_setup()
    C, alpha, r, delta, gamma, eta = 0.3, 0.8, 1.0, 0.7, 0.6, 0.05
    A = build_A(n, mu, L, s, nf, C, alpha, r, delta, gamma, eta)
    tau3 = (1 + 1 / (1 - alpha * r * delta)) / 2
    tx = 3 * tau3 / (tau3 - 1)
    cx = tau3 * (1 - alpha * r * delta)
    c1 = (n - eta * mu) ** 2 / (n * (n - 2 * eta * mu))
    c2, c3, c4, c5 = 4 / s, 2 * C / s * nf**2, tx * nf**2, tx * C * nf**2
    rt = 1 - gamma * s
    a21 = eta**2 * L**2 * c2 / gamma
    expected = np.array([
        [1 - eta * mu / n, eta * L**2 * c1 / mu, 0],
        [a21, (1 + rt**2) / 2 + a21, c3 * gamma],
        [2 * tx * eta**2 * L**2, c4 * gamma**2 + 2 * tx * eta**2 * L**2, cx + c5 * gamma**2],
    ])
    np.testing.assert_allclose(A, expected, rtol=1e-14)
    assert np.all(A >= 0)
    assert spectral_radius_3x3(A) == pytest.approx(np.max(np.abs(np.linalg.eigvals(A))), abs=1e-12)


@pytest.mark.parametrize(
    "kw, match",
    [
        (dict(eta=0.2), "eta="),
        (dict(gamma=0.0), "gamma"),
        (dict(gamma=2.5), "gamma"),
        (dict(alpha=1.5), "alpha"),
        (dict(tau3=5.0), "tau3"),
        (dict(tau3=1.0), "tau3"),
        (dict(s=0.0), "spectral gap"),
    ],
)
def test_build_A_names_violated_hypothesis(kw, match):
    n, mu, L, s, nf = _path3_setup()
    args = dict(n=n, mu=mu, L=L, s=s, normIW_F=nf, C=0.3, alpha=1.0, r=1.0, delta=0.7, gamma=0.5, eta=0.01, tau3=None)
    args.update(kw)
    with pytest.raises(CertificateError, match=match):
        build_A(**args)


def test_tau3_choice():
    assert default_tau3(1.0, 1.0, 1.0) == 2.0
    assert default_tau3(0.5, 1.0, 0.5) == pytest.approx((1 + 1 / 0.75) / 2)


def test_normsign_interval_is_nonempty():
    d = 7
    C, r, delta = constants(CompressorSpec("normsign", d))
    alpha = 1 / r
    assert alpha * r * delta == pytest.approx(1 / d)
    hi = 1 / (1 - 1 / d)
    tau3 = default_tau3(alpha, r, delta)
    assert 1 < tau3 < hi
    assert tau3 * (1 - alpha * r * delta) < 1


SPECS = [
    CompressorSpec("quantize", 5, bits=2),
    CompressorSpec("topk", 5, k=1),
    CompressorSpec("normsign", 5),
    CompressorSpec("identity", 5),
]


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.label())
def test_certificate_passes_on_path5(spec):
    game = lq_game(2 * np.eye(5), -np.ones(5))
    mix = max_degree_weights(path_graph(5))
    cert = certify_setup(game, mix, constants(spec))
    assert cert.passed and not cert.failing_rows
    assert np.all(cert.eps > 0)
    assert np.all(cert.row_margins >= 0)
    assert cert.rho_numeric <= cert.rho_bound + 1e-12
    assert cert.rho_bound == pytest.approx(1 - cert.eta * 2.0 / 6, abs=1e-15)
    assert all(ok for *_, ok in cert.conditions)
    assert 0 < cert.gamma <= 1 and cert.gamma * mix.s < 1
    A = build_A(5, 2.0, 2.0, mix.s, mix.norm_i_minus_w(), *constants(spec)[:1], 1 / constants(spec)[1],
                constants(spec)[1], constants(spec)[2], cert.gamma, cert.eta)
    np.testing.assert_allclose(A, cert.A, rtol=1e-15)


def test_spectral_norm_variant_certifies():
    game = lq_game(2 * np.eye(5), -np.ones(5))
    mix = max_degree_weights(path_graph(5))
    fro = certify_setup(game, mix, constants(SPECS[1]))
    spec = certify_setup(game, mix, constants(SPECS[1]), norm="spectral")
    assert spec.passed
    # a smaller ||I - W|| can only loosen the step-size caps
    assert spec.eta >= fro.eta


def test_identity_certificate_drives_engine():
    game = lq_game(2 * np.eye(2), [-1.0, 0.0])
    mix = metropolis_weights(path_graph(2))
    cert = certify_setup(game, mix, (0.0, 1.0, 1.0))
    trace = run(game, mix, CompressorSpec("identity", 2), AlgoConfig(eta=cert.eta, gamma=cert.gamma, K=20_000))
    r = np.array(trace.residual)
    assert r[-1] <= 1e-6 * r[0]
    # squared residual decays no slower than the certified factor
    # fit before the iterates reach the rounding floor
    tail = np.flatnonzero((r < 1e-2 * r[0]) & (r > 1e-10 * r[0]))
    factor = math.exp(np.polyfit(tail, np.log(r[tail] ** 2), 1)[0])
    assert factor <= cert.rho_bound


def test_certify_rejects_disconnected_and_alpha():
    with pytest.raises(CertificateError, match="spectral gap"):
        certify(3, 2.0, 2.0, 0.0, 1.0, 0.0, 1.0, 1.0)
    with pytest.raises(CertificateError, match="alpha"):
        certify(3, 2.0, 2.0, 0.5, 1.0, 4.0, 5.0, 0.2, alpha=1.0)
    with pytest.raises(CertificateError, match="c_x"):
        certify(3, 2.0, 2.0, 0.5, 1.0, 0.5, 1.0, 0.5, tau3=3.0)


def test_report_lists_everything():
    cert = certify(5, 2.0, 2.0, 0.19, 2.3, 0.8, 1.0, 0.2)
    text = cert.report()
    for section in ("[inputs]", "[constants]", "[step_sizes]", "[epsilon]", "[conditions]",
                    "[transition_matrix]", "[componentwise_test]"):
        assert section in text
    assert "result = PASS" in text
    assert text.count("ok\n") == len(cert.conditions)
    assert "c_x = " in text and "eps3 = 1" in text


def _violation(A, eps, theta):
    return max(0.0, float(np.max(-margins(A, eps, theta) / eps)))


@pytest.mark.parametrize("spec", SPECS[1:], ids=lambda s: s.label())
def test_violation_monotone_in_eta(spec):
    n, mu, L = 5, 2.0, 2.0
    mix = max_degree_weights(path_graph(5))
    C, r, delta = constants(spec)
    cert = certify(n, mu, L, mix.s, mix.norm_i_minus_w(), C, r, delta)
    cap = min(1 / (3 * mu), mu / (2 * L**2))
    grid = np.geomspace(cap, cert.eta * 1e-3, 40)
    vals = []
    for eta in grid:
        A = build_A(n, mu, L, mix.s, mix.norm_i_minus_w(), C, 1 / r, r, delta, cert.gamma, eta)
        vals.append(_violation(A, cert.eps, 1 - eta * mu / (n + 1)))
    assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))
    assert vals[-1] <= 1e-15


def test_non_strict_mode_returns_certificate():
    cert = certify(5, 2.0, 2.0, 0.19, 2.3, 0.8, 1.0, 0.2, strict=False)
    assert cert.passed and cert.failing_rows == []
