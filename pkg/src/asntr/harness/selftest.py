"""Quick property checks runnable from an installed package (``asntr selftest``)."""

from __future__ import annotations

import time

import numpy as np

from .. import oracles
from ..driver import NtrParams
from ..driver import run as run_asntr
from ..finite_sum import DenseMlp, glorot_init
from ..finite_sum.data import make_quadratic
from ..lsr1 import LSR1
from ..storm import StormParams
from ..storm import run as run_storm
from ..tr_subproblem import kkt_residual, solve_dense, solve_obs


def _random_lsr1(rng, n, m):
    state = LSR1(n, memory=max(m, 1), gamma=float(rng.uniform(0.1, 3.0)))
    for _ in range(m):
        s = rng.normal(size=n)
        H = rng.normal(size=(n, n))
        state.try_update(s, (H + H.T) @ s)
    return state


def check_subproblem(n_instances=200, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(n_instances):
        n = int(rng.integers(2, 21))
        state = _random_lsr1(rng, n, int(rng.integers(0, 6)))
        g = rng.normal(size=n)
        delta = float(rng.choice([0.1, 1.0, 10.0]))
        obs = solve_obs(state, g, delta)
        ref = solve_dense(state.dense(), g, delta)
        if abs(obs.model_value - ref.model_value) > 1e-6 * (1 + abs(ref.model_value)):
            return False
        if np.linalg.norm(obs.p) > delta * (1 + 1e-8):
            return False
        if kkt_residual(state.apply, obs, g) > 1e-8 * (np.linalg.norm(g) + obs.sigma * delta):
            return False
    return True


def check_lsr1(n_sequences=50, seed=1):
    rng = np.random.default_rng(seed)
    for _ in range(n_sequences):
        n = int(rng.integers(2, 13))
        state = LSR1(n, memory=10, gamma=float(rng.uniform(0.5, 2.0)))
        for _ in range(int(rng.integers(1, 11))):
            s = rng.normal(size=n)
            H = rng.normal(size=(n, n))
            state.try_update(s, (H + H.T) @ s)
        B, used = oracles.dense_sr1(state.gamma, state.S, state.Y)
        if len(used) != state.m or np.max(np.abs(B - state.dense())) > 1e-9:
            return False
    return True


def check_gradients(seed=2):
    rng = np.random.default_rng(seed)
    for sizes, loss in (((4, 5, 3), "softmax-cross-entropy"), ((4, 3, 2, 1), "half-mse")):
        net = DenseMlp(sizes, loss)
        w = glorot_init(net, seed)
        x = rng.normal(size=(3, sizes[0]))
        y = np.eye(sizes[-1])[rng.integers(0, sizes[-1], 3)] if sizes[-1] > 1 else rng.normal(size=(3, 1))
        _, g = net.batch_loss_and_grad(w, x, y)
        fd = oracles.central_difference_gradient(lambda v: net.batch_loss(v, x, y).mean(), w)
        if np.linalg.norm(g - fd) > 1e-5 * max(1.0, np.linalg.norm(fd)):
            return False
    return True


def check_convergence():
    _, prob = make_quadratic(200, 50, 0)
    w0 = np.zeros(50)
    a = run_asntr(prob, NtrParams(N0=200, max_iter=500, budget=10**9), w0)
    s = run_storm(prob, StormParams(N0=200, max_iter=500, budget=10**9), w0)
    return a.termination == s.termination == "gradient-tolerance"


CHECKS = (
    ("subproblem solver matches dense reference", check_subproblem),
    ("compact L-SR1 matches recursive SR1", check_lsr1),
    ("MLP gradients match finite differences", check_gradients),
    ("full-sample runs converge on a quadratic", check_convergence),
)


def selftest(out=print) -> int:
    failed = 0
    for label, fn in CHECKS:
        t0 = time.perf_counter()
        ok = fn()
        failed += not ok
        out(f"{'PASS' if ok else 'FAIL'}  {label}  ({time.perf_counter() - t0:.1f}s)")
    return 1 if failed else 0
