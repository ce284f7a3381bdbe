"""Trust-region subproblem: minimize 1/2 p.B p + g.p subject to |p| <= delta.

``solve_obs`` works on a compact L-SR1 matrix through a thin QR factorization of
Psi and a small symmetric eigenproblem, so B is never formed. ``solve_dense``
does the same on an explicit symmetric matrix and serves as the reference.
Both reduce to a diagonal problem solved by ``_solve_diagonal``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

MAX_SECULAR_ITER = 200


class SecularNonConvergence(RuntimeError):
    pass


@dataclass
class TrSolution:
    p: np.ndarray
    model_value: float
    sigma: float
    on_boundary: bool
    hard_case: bool
    lambda_min: float = float("nan")
    lambda_max_abs: float = float("nan")


def _check_inputs(g, delta, allow_zero=False):
    g = np.asarray(g, dtype=float)
    if not np.all(np.isfinite(g)) or not np.isfinite(delta):
        raise ValueError("non-finite trust-region inputs")
    if delta <= 0:
        raise ValueError("trust-region radius must be positive")
    if not allow_zero and not np.linalg.norm(g) > 0:
        raise ValueError("zero gradient: the caller must treat this as stationarity")
    return g


def _solve_diagonal(lam, a, delta, max_iter=MAX_SECULAR_ITER):
    """Minimize sum(1/2 lam_i x_i^2 + a_i x_i) subject to |x| <= delta.

    ``lam`` must be sorted ascending. Returns ``(x, sigma, hard_case)``. In the
    hard case ``x`` lies strictly inside the ball and the caller adds a
    boundary-reaching component along the eigenvector of ``lam[0]``.
    """
    lam_min = lam[0]
    scale = max(1.0, float(np.max(np.abs(lam))), float(np.linalg.norm(a)) / delta)
    if lam_min > 0:
        x = -a / lam
        if np.linalg.norm(x) <= delta:
            return x, 0.0, False
    lo = max(0.0, -lam_min)

    def xnorm(sig):
        return np.linalg.norm(a / (lam + sig))

    # Offset keeps the pole out of reach; if the boundary is not reached there,
    # the problem is (numerically) in the hard case.
    sig = lo if lam_min > 0 else lo + 1e-13 * scale
    with np.errstate(divide="ignore", invalid="ignore"):
        nx = xnorm(sig)
    if lam_min <= 0 and nx <= delta:
        return -a / (lam + sig), sig, True
    hi = lo + float(np.linalg.norm(a)) / delta + float(np.max(np.abs(lam))) + 1.0
    # phi(sig) = 1/|x(sig)| - 1/delta is concave and increasing, so Newton steps
    # taken from the left of the root stay there; bisection guards the rest.
    lo_b, hi_b = lo, hi
    for _ in range(max_iter):
        d = lam + sig
        x = -a / d
        nx = np.linalg.norm(x)
        if abs(nx - delta) <= 1e-14 * delta:
            return x, sig, False
        phi = 1.0 / nx - 1.0 / delta
        if phi < 0:
            lo_b = sig
        else:
            hi_b = sig
        dphi = float(np.sum(a * a / d ** 3)) / nx ** 3
        new = sig - phi / dphi if dphi > 0 else np.nan
        if not lo_b < new < hi_b:
            new = 0.5 * (lo_b + hi_b)
        if abs(new - sig) <= 4e-16 * max(1.0, abs(sig)):
            return -a / (lam + new), new, False
        sig = new
    raise SecularNonConvergence("secular equation did not converge")


def _hard_case_tau(x, vcoef, delta):
    """Length along the min-curvature eigenvector that reaches the boundary.

    ``vcoef`` is the current coordinate of ``x`` along that eigenvector; the
    sign is chosen so the model value does not increase.
    """
    rest = max(delta * delta - float(x @ x), 0.0)
    disc = np.sqrt(vcoef * vcoef + rest)
    return (-vcoef + disc) if vcoef >= 0 else (-vcoef - disc)


def _finish(p, qfun, g, sigma, delta, hard, lam):
    q = float(0.5 * p @ qfun(p) + g @ p)
    pn = np.linalg.norm(p)
    return TrSolution(p=p, model_value=q, sigma=float(sigma),
                      on_boundary=bool(pn >= delta * (1 - 1e-10)), hard_case=bool(hard),
                      lambda_min=float(lam[0]), lambda_max_abs=float(np.max(np.abs(lam))))


def solve_dense(B, g, delta) -> TrSolution:
    """Global minimizer via full eigendecomposition of ``B`` (small n only).

    Unlike ``solve_obs`` a zero gradient is allowed; with negative curvature
    the answer is then a boundary step along the lowest eigenvector.
    """
    B = np.asarray(B, dtype=float)
    g = _check_inputs(g, delta, allow_zero=True)
    lam, V = np.linalg.eigh(0.5 * (B + B.T))
    a = V.T @ g
    x, sigma, hard = _solve_diagonal(lam, a, delta)
    if hard:
        tau = _hard_case_tau(x, x[0], delta)
        x = x.copy()
        x[0] += tau
    p = V @ x
    return _finish(p, lambda v: B @ v, g, sigma, delta, hard, lam)


def solve_obs(state, g, delta) -> TrSolution:
    """Exact subproblem solution for a compact L-SR1 ``state`` (see :mod:`asntr.lsr1`)."""
    g = _check_inputs(g, delta)
    gamma, Psi, Mmat = state.gamma, state.Psi, state.Mmat
    n, m = Psi.shape
    if m == 0:
        lam_core = np.zeros(0)
        P = np.zeros((n, 0))
    else:
        Qf, R = np.linalg.qr(Psi, mode="reduced")
        core = R @ Mmat @ R.T
        lam_hat, U = np.linalg.eigh(0.5 * (core + core.T))
        lam_core = gamma + lam_hat
        P = Qf @ U
    k = P.shape[1]
    g_par = P.T @ g
    g_perp = g - P @ g_par
    # second projection: when g lies (almost) in range(P), the first residual is
    # rounding noise that is not orthogonal to P, yet it spans the gamma-space
    corr = P.T @ g_perp
    g_par = g_par + corr
    g_perp = g_perp - P @ corr
    gp_norm = float(np.linalg.norm(g_perp))
    if n > k:
        lam = np.append(lam_core, gamma)
        a = np.append(g_par, gp_norm)
    else:
        lam, a = lam_core, g_par
    order = np.argsort(lam, kind="stable")
    lam, a = lam[order], a[order]
    try:
        x, sigma, hard = _solve_diagonal(lam, a, delta)
    except SecularNonConvergence:
        log.warning("secular iteration failed, falling back to the dense solver")
        return solve_dense(state.dense(), g, delta)

    def basis(j):
        # column j of the (sorted) eigenbasis; the lumped gamma-space is index k
        src = order[j]
        if src < k:
            return P[:, src]
        if gp_norm > 0:
            return g_perp / gp_norm
        return _orth_complement_vector(P, n)

    coords = x.copy()
    if hard:
        tau = _hard_case_tau(x, x[0], delta)
        coords[0] += tau
    p = np.zeros(n)
    for j in range(lam.size):
        if coords[j] != 0.0:
            p += coords[j] * basis(j)
    return _finish(p, state.apply, g, sigma, delta, hard, lam)


def _orth_complement_vector(P, n):
    """Deterministic unit vector orthogonal to the columns of P."""
    for i in np.argsort(np.sum(P * P, axis=1), kind="stable"):
        z = np.zeros(n)
        z[i] = 1.0
        for _ in range(2):
            z -= P @ (P.T @ z)
        nz = np.linalg.norm(z)
        if nz > 1e-8:
            return z / nz
    raise RuntimeError("no orthogonal complement available")


def cauchy_point(g, gBg, g_norm, delta):
    """Minimizer of the model along -g inside the ball; returns ``(p_c, q_c)``."""
    g = np.asarray(g, dtype=float)
    if g_norm <= 0:
        raise ValueError("g_norm must be positive")
    if gBg <= 0:
        tau = 1.0
    else:
        tau = min(1.0, g_norm ** 3 / (delta * gBg))
    step = tau * delta / g_norm
    p_c = -step * g
    q_c = -step * g_norm ** 2 + 0.5 * step ** 2 * gBg
    return p_c, float(q_c)


def check_cauchy_fraction(sol: TrSolution, g_norm, b_norm, delta, c=0.5) -> bool:
    """Q(p) <= -(c/2) |g| min(delta, |g| / |B|)."""
    if not 0 < c < 1:
        raise ValueError("c must lie in (0, 1)")
    reach = delta if b_norm <= 0 else min(delta, g_norm / b_norm)
    return sol.model_value <= -0.5 * c * g_norm * reach


def kkt_residual(apply_b, sol: TrSolution, g) -> float:
    """|(B + sigma I) p + g|."""
    return float(np.linalg.norm(apply_b(sol.p) + sol.sigma * sol.p + g))
