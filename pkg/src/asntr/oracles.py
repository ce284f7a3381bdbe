"""Slow, independent reference computations used by the self-test and the tests.

None of these share code with the production solvers.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.optimize


def dense_sr1(gamma, S, Y, skip_tol=1e-8):
    """Recursive SR1 from B_0 = gamma I over the columns of S, Y in order.

    Returns ``(B, used)`` where ``used`` lists the pairs that passed the skip test.
    """
    n = S.shape[0]
    B = gamma * np.eye(n)
    used = []
    for j in range(S.shape[1]):
        s, y = S[:, j], Y[:, j]
        r = y - B @ s
        if abs(r @ s) <= skip_tol * np.linalg.norm(s) * np.linalg.norm(r):
            continue
        B = B + np.outer(r, r) / (r @ s)
        used.append(j)
    return B, used


def trust_region_gep(A, g, delta):
    """Global minimizer of 1/2 x.A x + g.x on |x| <= delta via one generalized
    eigenproblem of size 2n (rightmost real eigenvalue gives the multiplier).

    Returns ``(x, multiplier)``.
    """
    A = 0.5 * (np.asarray(A, float) + np.asarray(A, float).T)
    g = np.asarray(g, float)
    n = g.size
    lam_min = np.linalg.eigvalsh(A)[0]
    if lam_min > 0:
        x = np.linalg.solve(A, -g)
        if np.linalg.norm(x) <= delta:
            return x, 0.0
    I = np.eye(n)
    M0 = np.block([[-I, A], [A, -np.outer(g, g) / delta ** 2]])
    M1 = np.block([[np.zeros((n, n)), I], [I, np.zeros((n, n))]])
    # det(M0 + lam M1) = 0  <=>  M0 z = lam (-M1) z
    vals, vecs = scipy.linalg.eig(M0, -M1)
    finite = np.isfinite(vals)
    vals, vecs = vals[finite], vecs[:, finite]
    real = np.abs(vals.imag) <= 1e-8 * np.maximum(1.0, np.abs(vals.real))
    j = np.argmax(np.where(real, vals.real, -np.inf))
    lam = float(vals[j].real)
    z = vecs[:, j].real
    y1, y2 = z[:n], z[n:]
    scale = max(1.0, float(np.max(np.abs(A))))
    if lam <= -lam_min + 1e-6 * scale:
        # multiplier at -lam_min: hard case if the minimum-norm solution of
        # (A - lam_min I) x = -g lies inside the ball
        w, V = np.linalg.eigh(A - lam_min * I)
        keep = w > 1e-9 * scale
        x = -V[:, keep] @ ((V[:, keep].T @ g) / w[keep])
        if np.linalg.norm(x) <= delta:
            v = V[:, 0]
            b = x @ v
            return x + (-b + np.sqrt(b * b + delta ** 2 - x @ x)) * v, -lam_min
    sign = np.sign(g @ y2) or 1.0
    return -sign * delta * y1 / np.linalg.norm(y1), lam


def model_value(A, g, x):
    return float(0.5 * x @ A @ x + g @ x)


def central_difference_gradient(f, w, h=1e-6):
    """Central finite differences of a scalar function, one coordinate at a time."""
    w = np.asarray(w, dtype=float)
    grad = np.empty_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = h
        grad[i] = (f(w + e) - f(w - e)) / (2 * h)
    return grad


def disk_grid_search(B, g, delta, resolution=1e-3):
    """Brute-force minimizer of the 2-D model over the disk, then a local polish.

    The polish minimizes along the boundary circle (or takes the interior
    stationary point) starting from the best grid point.
    """
    B = np.asarray(B, float)
    g = np.asarray(g, float)
    ticks = np.arange(-delta, delta + resolution / 2, resolution)
    best_q, best_x = np.inf, None
    for x0 in np.array_split(ticks, max(1, ticks.size // 500)):
        X, Y = np.meshgrid(x0, ticks, indexing="ij")
        inside = X * X + Y * Y <= delta * delta
        q = 0.5 * (B[0, 0] * X * X + 2 * B[0, 1] * X * Y + B[1, 1] * Y * Y) + g[0] * X + g[1] * Y
        q = np.where(inside, q, np.inf)
        j = np.unravel_index(np.argmin(q), q.shape)
        if q[j] < best_q:
            best_q, best_x = q[j], np.array([X[j], Y[j]])
    q_of = lambda x: 0.5 * x @ B @ x + g @ x  # noqa: E731
    candidates = [best_x]
    theta0 = np.arctan2(best_x[1], best_x[0])
    res = scipy.optimize.minimize_scalar(
        lambda t: q_of(delta * np.array([np.cos(t), np.sin(t)])),
        bracket=(theta0 - 0.01, theta0, theta0 + 0.01))
    candidates.append(delta * np.array([np.cos(res.x), np.sin(res.x)]))
    try:
        x_int = np.linalg.solve(B, -g)
        if np.linalg.norm(x_int) <= delta:
            candidates.append(x_int)
    except np.linalg.LinAlgError:
        pass
    x = min(candidates, key=q_of)
    return x, float(q_of(x))
