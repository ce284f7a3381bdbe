"""Monotone stochastic trust-region comparator ("storm_like").

A simplified STORM-style method: the mini-batch size follows the linear rule
N_k = min(N, max(100 k + N0, ceil(1 / delta_k^2))), every quantity of an
iteration is computed on one shared mini-batch, and the ratio is the plain
monotone one. It reuses the L-SR1 model and the exact subproblem solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .driver import QuasiNewtonTR
from .finite_sum.problems import SampleIndexSet, subsampled_value, subsampled_value_and_gradient
from .trace import STORM_EVENT, IterationRecord, RunResult
from .tr_subproblem import solve_obs


@dataclass
class StormParams:
    delta0: float = 1.0
    delta_max: float = 10.0
    memory: int = 30
    eta1: float = 1e-4
    eta2: float = 1e-3
    gamma: float = 2.0
    N0: int | None = None
    budget: int = 10**6
    grad_tol: float = 1e-6
    max_iter: int = 100_000
    seed: int = 0
    gamma0: float = 1.0
    gamma_min: float = 1e-6
    gamma_max: float = 1e6
    skip_tol: float = 1e-8
    L_cap: float = 1e6
    cauchy_c: float = 0.5

    def __post_init__(self):
        if not (self.delta0 > 0 and self.delta_max >= self.delta0):
            raise ValueError("need 0 < delta0 <= delta_max")
        if not 0 < self.eta1 < self.eta2:
            raise ValueError("need 0 < eta1 < eta2")
        if not self.gamma > 1:
            raise ValueError("radius factor gamma must exceed 1")
        if self.N0 is not None and self.N0 < 1:
            raise ValueError("N0 must be at least 1")
        if self.memory < 1 or self.budget < 0 or self.max_iter < 0:
            raise ValueError("memory must be >= 1, budget and max_iter >= 0")
        if not 0 < self.gamma_min <= self.gamma0 <= self.gamma_max:
            raise ValueError("need gamma_min <= gamma0 <= gamma_max")
        if not 0 < self.cauchy_c < 1:
            raise ValueError("cauchy_c must lie in (0, 1)")


def storm_sample_size(k, N0, delta_k, N) -> int:
    if delta_k <= 0:
        raise ValueError("delta_k must be positive")
    by_radius = math.ceil(1.0 / delta_k ** 2) if delta_k > 1e-150 else N
    return int(max(1, min(N, max(100 * k + N0, by_radius))))


class StormLike(QuasiNewtonTR):
    def __init__(self, problem, params: StormParams, w0):
        super().__init__(problem, params, w0)
        self.N0 = params.N0 if params.N0 is not None else self.default_n0()
        self.batch = None

    def step(self):
        if self.termination is not None:
            return None
        p = self.params
        N_k = storm_sample_size(self.k, self.N0, self.delta, self.N)
        same = self.batch is not None and N_k == self.N and self.batch.is_full
        if not same:
            self._cache = None
        cost = 0 if self._cache is not None else N_k
        if self.counter.count + cost > p.budget:
            self.termination = "budget-exhausted"
            return None
        if not same:
            self.batch = SampleIndexSet.draw(self.rng, N_k, self.N)

        self.last_point = (self.w, self.batch)
        f_k, g_k, reused = self._value_grad(self.batch)
        g_norm = float(np.linalg.norm(g_k))
        full = self.batch.is_full
        if full and g_norm <= p.grad_tol:
            self._cache = (f_k, g_k)
            self.termination = "gradient-tolerance"
            return None
        delta_k = self.delta
        if g_norm == 0.0:
            self.delta = min(p.gamma * delta_k, p.delta_max)
            rec = IterationRecord(
                k=self.k, N_k=N_k, delta_k=delta_k, rho_N=math.nan, rho_D=None, t_k=0.0,
                ttilde_k=0.0, accepted=False, event=STORM_EVENT, f_Nk_at_wk=f_k, g_norm=0.0,
                b_norm_est=self._b_norm(), N_g_cumulative=self.counter.count, q_value=0.0,
                g_reused=reused, delta_next=self.delta, N_next=N_k)
            self.k += 1
            return rec

        sol = solve_obs(self.lsr1, g_k, delta_k)
        b_norm = self._b_norm(sol)
        cauchy_ok = self._check_cauchy(sol, g_norm, b_norm)
        w_t = self.w + sol.p
        f_t = subsampled_value(self.problem, w_t, self.batch)
        rho = (f_t - f_k) / sol.model_value
        accepted = rho >= p.eta1
        self.delta = min(p.gamma * delta_k, p.delta_max) if rho >= p.eta2 else delta_k / p.gamma
        stored = False
        if accepted:
            _, g_t = subsampled_value_and_gradient(self.problem, w_t, self.batch, self.counter)
            stored = self._store_pair(w_t - self.w, g_t - g_k)
            self.w = w_t
            self._cache = (f_t, g_t)
        else:
            self._cache = (f_k, g_k)
        # the cache only survives into a full-sample next iteration (checked above)
        rec = IterationRecord(
            k=self.k, N_k=N_k, delta_k=delta_k, rho_N=rho, rho_D=None, t_k=0.0, ttilde_k=0.0,
            accepted=bool(accepted), event=STORM_EVENT, f_Nk_at_wk=f_k, g_norm=g_norm,
            b_norm_est=b_norm, N_g_cumulative=self.counter.count, q_value=sol.model_value,
            p_norm=float(np.linalg.norm(sol.p)), g_reused=reused, pair_attempted=bool(accepted),
            pair_stored=stored, cauchy_ok=cauchy_ok, delta_next=self.delta, N_next=N_k)
        self.k += 1
        return rec


def run(problem, params: StormParams, w0, callback=None) -> RunResult:
    return StormLike(problem, params, w0).run(callback)
