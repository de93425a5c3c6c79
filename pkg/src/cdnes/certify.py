"""Linear-rate certificates for compressed NE seeking.

The squared optimisation, consensus and compression errors obey a 3 x 3
nonnegative linear recursion ``e_{k+1} <= A e_k``. If a positive vector
``eps`` satisfies ``A eps <= theta eps`` componentwise then ``rho(A) <= theta``,
which is how a step-size pair ``(gamma, eta)`` is certified here with
``theta = 1 - eta mu / (n + 1)``.

All certificate arithmetic runs in 50-digit mpmath: with the tiny step sizes
the construction produces, ``1 - eta mu / n`` and ``1 - eta mu / (n + 1)``
differ below double-precision resolution.

``C`` multiplies ``||I - W||^2`` in the consensus row without an embedded
gamma (the matrix entry carries ``c3 gamma``), and ``||I - W||`` defaults to
the Frobenius norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

PRECISION = 50
RHO_SLACK = 1e-12


class CertificateError(ValueError):
    """Raised when a hypothesis is violated or the componentwise test fails."""


def _mp(x):
    return mpmath.mpf(x)


@dataclass(frozen=True)
class RateConstants:
    c1: object
    c2: object
    c3: object
    c4: object
    c5: object
    t_x: object
    c_x: object
    rho_tilde: object
    tau3: object
    tau1: object
    tau2: object

    def as_floats(self) -> dict:
        return {k: float(v) for k, v in self.__dict__.items()}


def default_tau3(alpha: float, r: float, delta: float) -> float:
    """Midpoint of ``(1, 1 / (1 - alpha r delta))``, or 2 when ``alpha r delta = 1``."""
    ard = alpha * r * delta
    if ard >= 1.0 - 1e-15:
        return 2.0
    return 0.5 * (1.0 + 1.0 / (1.0 - ard))


def rate_constants(n, mu, L, s, norm_iw, C, alpha, r, delta, gamma, eta, tau3) -> RateConstants:
    with mpmath.workdps(PRECISION):
        n, mu, s, C = _mp(n), _mp(mu), _mp(s), _mp(C)
        ard = _mp(alpha) * _mp(r) * _mp(delta)
        tau3 = _mp(tau3)
        em = _mp(eta) * mu
        iw2 = _mp(norm_iw) ** 2
        t_x = 3 * tau3 / (tau3 - 1)
        rho_t = 1 - _mp(gamma) * s
        return RateConstants(
            c1=(n - em) ** 2 / (n * (n - 2 * em)),
            c2=4 / s,
            c3=2 * C / s * iw2,
            c4=t_x * iw2,
            c5=t_x * C * iw2,
            t_x=t_x,
            c_x=tau3 * (1 - ard),
            rho_tilde=rho_t,
            tau3=tau3,
            tau1=mu * (n - 2 * em) / (n - em),
            tau2=(1 - rho_t**2) / (2 * rho_t**2) if rho_t != 0 else mpmath.inf,
        )


def _check_hypotheses(n, mu, L, s, alpha, r, delta, gamma, eta, tau3):
    if not s > 0:
        raise CertificateError(f"spectral gap s={s} must be positive (graph disconnected or W degenerate)")
    if not (0 < gamma and gamma * s < 1):
        raise CertificateError(f"need 0 < gamma and gamma*s < 1, got gamma={gamma}, s={s}")
    eta_cap = min(1.0 / (3.0 * mu), mu / (2.0 * L**2))
    if not 0 < eta <= eta_cap:
        raise CertificateError(f"eta={eta} violates eta <= min(1/(3 mu), mu/(2 L^2)) = {eta_cap}")
    if not 0 < alpha * r <= 1 + 1e-12:
        raise CertificateError(f"alpha={alpha} violates alpha <= 1/r = {1 / r}")
    ard = alpha * r * delta
    if ard < 1.0 - 1e-15:
        hi = 1.0 / (1.0 - ard)
        if not 1.0 < tau3 < hi:
            raise CertificateError(f"tau3={tau3} outside its feasible interval (1, {hi})")
    elif not tau3 > 1.0:
        raise CertificateError(f"tau3={tau3} must exceed 1")


def _matrix(n, mu, L, gamma, eta, k: RateConstants):
    with mpmath.workdps(PRECISION):
        n, mu, L, g, e = _mp(n), _mp(mu), _mp(L), _mp(gamma), _mp(eta)
        L2 = L**2
        a21 = e**2 * L2 * k.c2 / g
        a31 = 2 * k.t_x * e**2 * L2
        return mpmath.matrix([
            [1 - e * mu / n, e * L2 * k.c1 / mu, 0],
            [a21, (1 + k.rho_tilde**2) / 2 + a21, k.c3 * g],
            [a31, k.c4 * g**2 + a31, k.c_x + k.c5 * g**2],
        ])


def build_A(n, mu, L, s, normIW_F, C, alpha, r, delta, gamma, eta, tau3=None) -> np.ndarray:
    """Transition matrix of the three squared error quantities.

    Rows bound, in order, ``||Xbar - X*||^2``, ``||X - Xbar||^2`` and
    ``||X - H||^2`` one step ahead. Raises :class:`CertificateError` naming
    the violated hypothesis.
    """
    if tau3 is None:
        tau3 = default_tau3(alpha, r, delta)
    _check_hypotheses(n, mu, L, s, alpha, r, delta, gamma, eta, tau3)
    k = rate_constants(n, mu, L, s, normIW_F, C, alpha, r, delta, gamma, eta, tau3)
    return _to_numpy(_matrix(n, mu, L, gamma, eta, k))


def _to_numpy(m) -> np.ndarray:
    return np.array([[float(m[i, j]) for j in range(m.cols)] for i in range(m.rows)])


def spectral_radius_3x3(A) -> float:
    """Largest root modulus of ``det(lambda I - A)``, solved in extended precision."""
    with mpmath.workdps(PRECISION):
        if isinstance(A, mpmath.matrix):
            a = [[A[i, j] for j in range(3)] for i in range(3)]
        else:
            A = np.asarray(A, dtype=float)
            if A.shape != (3, 3):
                raise ValueError(f"expected a 3x3 matrix, got shape {A.shape}")
            a = [[_mp(float(A[i, j])) for j in range(3)] for i in range(3)]
        tr = a[0][0] + a[1][1] + a[2][2]
        minors = (
            a[0][0] * a[1][1] - a[0][1] * a[1][0]
            + a[0][0] * a[2][2] - a[0][2] * a[2][0]
            + a[1][1] * a[2][2] - a[1][2] * a[2][1]
        )
        det = (
            a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
        )
        try:
            roots = mpmath.polyroots([1, -tr, minors, -det], maxsteps=200, extraprec=2 * PRECISION)
        except mpmath.libmp.NoConvergence:
            # exactly repeated roots stall the iteration; use the companion matrix instead
            companion = mpmath.matrix([[tr, -minors, det], [1, 0, 0], [0, 1, 0]])
            roots = mpmath.eig(companion, left=False, right=False)
        return float(max(abs(z) for z in roots))


def margins(A, eps, theta) -> np.ndarray:
    """Componentwise slack ``theta * eps - A eps``; all nonnegative means the test passes."""
    with mpmath.workdps(PRECISION):
        if not isinstance(A, mpmath.matrix):
            A = mpmath.matrix([[_mp(float(v)) for v in row] for row in np.asarray(A, dtype=float)])
        e = [x if isinstance(x, mpmath.mpf) else _mp(float(x)) for x in eps]
        th = theta if isinstance(theta, mpmath.mpf) else _mp(float(theta))
        out = []
        for i in range(3):
            out.append(th * e[i] - sum(A[i, j] * e[j] for j in range(3)))
        return np.array([float(v) for v in out])


@dataclass
class RateCertificate:
    A: np.ndarray
    eps: np.ndarray
    gamma: float
    eta: float
    rho_bound: float
    rho_numeric: float
    row_margins: np.ndarray
    inputs: dict
    constants: dict
    conditions: list = field(default_factory=list)
    passed: bool = False
    failing_rows: list = field(default_factory=list)

    def report(self) -> str:
        lines = ["[inputs]"]
        lines += [f"{k} = {_num(v)}" for k, v in self.inputs.items()]
        lines.append("")
        lines.append("[constants]")
        lines += [f"{k} = {_num(v)}" for k, v in self.constants.items()]
        lines.append("")
        lines.append("[step_sizes]")
        lines.append(f"gamma = {_num(self.gamma)}")
        lines.append(f"eta = {_num(self.eta)}")
        lines.append("")
        lines.append("[epsilon]")
        lines += [f"eps{i + 1} = {_num(v)}" for i, v in enumerate(self.eps)]
        lines.append("")
        lines.append("[conditions]")
        for name, lhs, rhs, ok in self.conditions:
            lines.append(f"{name}: lhs = {_num(lhs)}, rhs = {_num(rhs)}, margin = {_num(rhs - lhs)}, {'ok' if ok else 'VIOLATED'}")
        lines.append("")
        lines.append("[transition_matrix]")
        for row in self.A:
            lines.append("  ".join(_num(v) for v in row))
        lines.append("")
        lines.append("[componentwise_test]")
        for i, m in enumerate(self.row_margins):
            lines.append(f"row{i + 1}_margin = {_num(m)}")
        lines.append(f"rho_bound = {_num(self.rho_bound)}")
        lines.append(f"rho_numeric = {_num(self.rho_numeric)}")
        lines.append(f"result = {'PASS' if self.passed else 'FAIL rows ' + ','.join(map(str, self.failing_rows))}")
        return "\n".join(lines) + "\n"


def _num(v) -> str:
    return f"{float(v):.17g}"


def certify(n, mu, L, s, normIW_F, C, r, delta, alpha=None, tau3=None, strict=True) -> RateCertificate:
    """Construct ``eps`` and certified ``(gamma, eta)`` and run the componentwise test.

    ``alpha`` defaults to ``1/r``. With ``eps3 = 1``:

    * ``eps2 = 4 c3 / s`` (the smallest value clearing the consensus row's
      compression term), floored for lossless operators so that it stays
      positive,
    * ``eps1 = n (n+1) L^2 c1_max eps2 / mu^2`` where ``c1_max`` is ``c1`` at
      the largest admissible ``eta mu = 1/3``; ``c1`` grows with ``eta`` so
      the first row then holds for every admissible step,
    * ``gamma = min(1, (1 - c_x) eps3 / m3)``,
    * ``eta = min(s (n+1) gamma / (8 mu), mu eps2 gamma / (m1 (n+1)),
      gamma / L, 1/(3 mu), mu / (2 L^2))``.

    With ``strict`` a failing test raises :class:`CertificateError` naming
    the failing rows; otherwise the failed certificate is returned.
    """
    if alpha is None:
        alpha = 1.0 / r
    if not s > 0:
        raise CertificateError(f"spectral gap s={s} must be positive (graph disconnected or W degenerate)")
    if not 0 < alpha * r <= 1 + 1e-12:
        raise CertificateError(f"alpha={alpha} violates alpha <= 1/r = {1 / r}")
    if tau3 is None:
        tau3 = default_tau3(alpha, r, delta)

    with mpmath.workdps(PRECISION):
        n_, mu_, L_, s_, C_ = _mp(n), _mp(mu), _mp(L), _mp(s), _mp(C)
        # gamma- and eta-free parts of the constants
        k0 = rate_constants(n, mu, L, s, normIW_F, C, alpha, r, delta, 1.0 if s < 1 else 0.5, 0.0, tau3)
        if not k0.c_x < 1:
            raise CertificateError(f"c_x = {float(k0.c_x)} is not below 1; choose tau3 in its feasible interval")
        c1_max = (n_ - _mp(1) / 3) ** 2 / (n_ * (n_ - _mp(2) / 3))
        ratio = n_ * (n_ + 1) * L_**2 * c1_max / mu_**2
        eps3 = _mp(1)
        m2 = k0.c3 * eps3
        # lossless operators leave eps2 free; balance its share of m3 against mu/((n+1)L)
        eps2_floor = (mu_ * eps3 / ((n_ + 1) * L_)) / (2 * k0.t_x * (1 + ratio) + k0.c4)
        eps2 = max(4 * m2 / s_, eps2_floor)
        eps1 = ratio * eps2
        m1 = L_**2 * k0.c2 * (eps1 + eps2)
        m3 = k0.t_x * (2 * eps1 + 2 * eps2) + k0.c4 * eps2 + k0.c5 * eps3 + mu_ * eps3 / ((n_ + 1) * L_)
        gamma = min(_mp(1), (1 - k0.c_x) * eps3 / m3)
        if gamma * s_ >= 1:
            gamma = (1 - _mp(10) ** -12) / s_
        gamma = _mp(_round_down(gamma))
        eta_terms = {
            "s(n+1)gamma/(8mu)": s_ * (n_ + 1) * gamma / (8 * mu_),
            "mu eps2 gamma/(m1(n+1))": mu_ * eps2 * gamma / (m1 * (n_ + 1)),
            "gamma/L": gamma / L_,
            "1/(3mu)": 1 / (3 * mu_),
            "mu/(2L^2)": mu_ / (2 * L_**2),
        }
        eta = min(eta_terms.values())

        gamma_f, eta_f = float(gamma), _round_down(eta)
        _check_hypotheses(n, mu, L, s, alpha, r, delta, gamma_f, eta_f, tau3)
        k = rate_constants(n, mu, L, s, normIW_F, C, alpha, r, delta, gamma_f, eta_f, tau3)
        A_mp = _matrix(n, mu, L, gamma_f, eta_f, k)
        g, e = _mp(gamma_f), _mp(eta_f)
        theta = 1 - e * mu_ / (n_ + 1)
        eps = [eps1, eps2, eps3]
        row_margins = margins(A_mp, eps, theta)
        slack = [theta * eps[i] - sum(A_mp[i, j] * eps[j] for j in range(3)) for i in range(3)]
        failing = [i + 1 for i, m in enumerate(slack) if m < 0]
        rho_num = spectral_radius_3x3(A_mp)
        conditions = [
            ("eps1 >= n(n+1)L^2 c1/mu^2 * eps2", n_ * (n_ + 1) * L_**2 * k.c1 / mu_**2 * eps2, eps1),
            ("eps2 >= 4 m2 / s", 4 * k.c3 * eps3 / s_, eps2),
            ("gamma <= 1", g, 1),
            ("gamma <= (1 - c_x) eps3 / m3", g, (1 - k.c_x) * eps3 / m3),
            ("gamma * s < 1", g * s_, 1),
        ]
        conditions += [(f"eta <= {name}", e, _recompute(name, s_, n_, g, mu_, eps2, m1, L_)) for name in eta_terms]
        conditions.append(("c_x < 1", k.c_x, 1))
        cond_out = [(name, float(lhs), float(rhs), bool(lhs <= rhs)) for name, lhs, rhs in conditions]

    cert = RateCertificate(
        A=_to_numpy(A_mp),
        eps=np.array([float(v) for v in eps]),
        gamma=gamma_f,
        eta=eta_f,
        rho_bound=float(theta),
        rho_numeric=rho_num,
        row_margins=row_margins,
        inputs={"n": n, "mu": mu, "L": L, "s": s, "norm_I_minus_W": normIW_F, "C": C,
                "r": r, "delta": delta, "alpha": alpha, "tau3": tau3},
        constants=k.as_floats(),
        conditions=cond_out,
        passed=not failing and rho_num <= float(theta) + RHO_SLACK,
        failing_rows=failing,
    )
    if strict and not cert.passed:
        detail = f"rows {failing}" if failing else f"rho_numeric {rho_num} > bound {float(theta)}"
        raise CertificateError(f"componentwise test failed: {detail}")
    return cert


def _round_down(x) -> float:
    # the certified step must not exceed its extended-precision cap
    f = float(x)
    return math.nextafter(f, 0.0) if mpmath.mpf(f) > x else f


def _recompute(name, s, n, g, mu, eps2, m1, L):
    return {
        "s(n+1)gamma/(8mu)": s * (n + 1) * g / (8 * mu),
        "mu eps2 gamma/(m1(n+1))": mu * eps2 * g / (m1 * (n + 1)),
        "gamma/L": g / L,
        "1/(3mu)": 1 / (3 * mu),
        "mu/(2L^2)": mu / (2 * L**2),
    }[name]


def certify_setup(game, mix, compressor_constants, alpha=None, norm: str = "fro", **kw) -> RateCertificate:
    """Certificate for a concrete game, mixing matrix and ``(C, r, delta)``."""
    C, r, delta = compressor_constants
    return certify(mix.n, game.mu, game.L, mix.s, mix.norm_i_minus_w(norm), C, r, delta, alpha=alpha, **kw)
