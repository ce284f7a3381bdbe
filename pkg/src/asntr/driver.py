"""Adaptive-subsample non-monotone trust-region method (ASNTR).

One iteration builds an L-SR1 model on the current mini-batch, solves the
trust-region subproblem exactly, and judges the trial point twice: by a
non-monotone ratio on the mini-batch, and, while the mini-batch is not the full
sample, by a linear-model ratio on an independently drawn extra sample. The
extra-sample ratio also decides when the mini-batch must grow.

Random draws come from a single generator seeded by ``params.seed``. Per
iteration the order is: extra sample (only when N_k < N), then the next
mini-batch (only when a fresh one is needed). The initial mini-batch is drawn
at construction.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields

import numpy as np
from scipy.special import zeta

from .errors import NonFiniteValueError
from .finite_sum.problems import (
    GradientCounter,
    SampleIndexSet,
    subsampled_value,
    subsampled_value_and_gradient,
)
from .lsr1 import LSR1, gamma_init
from .trace import IterationRecord, RunResult
from .tr_subproblem import check_cauchy_fraction, solve_obs

log = logging.getLogger(__name__)

KEEP_SET = "keep-set"
FRESH_SET = "fresh-set"


@dataclass
class NtrParams:
    delta0: float = 1.0
    delta_max: float = 10.0
    memory: int = 30
    eta: float = 1e-4
    nu: float = 1e-4
    eta1: float = 0.1
    eta2: float = 0.75
    tau1: float = 0.5
    tau2: float = 0.8
    tau3: float = 2.0
    epsilon: float = 1e-3
    C1: float = 1.0
    C2: float = 1.0
    exponent: float = 1.1
    D_size: int = 1
    increase_factor: float = 1.01
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
        checks = [
            (self.delta0 > 0 and self.delta_max > 0, "delta0 and delta_max must be positive"),
            (self.delta0 <= self.delta_max, "delta0 must not exceed delta_max"),
            (0 <= self.eta < 0.25 and 0 <= self.nu < 0.25, "eta and nu must lie in [0, 1/4)"),
            (self.eta < self.eta1 < self.eta2 <= 0.75, "need eta < eta1 < eta2 <= 3/4"),
            (0 < self.tau1 <= 0.5 < self.tau2 < 1 < self.tau3,
             "need 0 < tau1 <= 0.5 < tau2 < 1 < tau3"),
            (0 <= self.epsilon < 0.5, "epsilon must lie in [0, 1/2)"),
            (self.C1 > 0 and self.C2 > 0, "C1 and C2 must be positive"),
            (self.exponent > 1, "schedule exponent must exceed 1 (summability)"),
            (self.D_size >= 1, "D_size must be at least 1"),
            (self.increase_factor > 1, "increase_factor must exceed 1"),
            (self.N0 is None or self.N0 >= 1, "N0 must be at least 1"),
            (self.memory >= 1, "memory must be at least 1"),
            (self.budget >= 0, "budget must be non-negative"),
            (self.max_iter >= 0, "max_iter must be non-negative"),
            (0 < self.gamma_min <= self.gamma0 <= self.gamma_max, "need gamma_min <= gamma0 <= gamma_max"),
            (0 < self.cauchy_c < 1, "cauchy_c must lie in (0, 1)"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


# -- scalar rules ------------------------------------------------------------

def t_schedule(k, C1, exponent=1.1) -> float:
    return C1 / (k + 1) ** exponent


def ttilde_schedule(k, C2, exponent=1.1) -> float:
    return C2 / (k + 1) ** exponent


def schedule_total(C, exponent=1.1) -> float:
    """sum_{k>=0} C / (k+1)^exponent."""
    return float(C * zeta(exponent, 1))


def rho_n(f_Nk_wt, f_Nk_wk, q_pk, delta_k, t_k) -> float:
    """Non-monotone agreement between sampled decrease and model decrease."""
    if not q_pk < 0:
        raise ValueError("model decrease must be negative")
    return (f_Nk_wt - f_Nk_wk - t_k * delta_k) / q_pk


def rho_d(f_Dk_wt, f_Dk_wk, gbar_norm_sq, delta_k, ttilde_k) -> float:
    """Extra-sample agreement against the linear model along -gbar.

    A zero extra-sample gradient carries no rejection signal and yields +inf.
    """
    if gbar_norm_sq == 0:
        log.debug("zero extra-sample gradient; extra-sample check passes vacuously")
        return math.inf
    return (f_Dk_wt - f_Dk_wk - delta_k * ttilde_k) / (-gbar_norm_sq)


def h_saa(N_k, N) -> float:
    if not 1 <= N_k <= N:
        raise ValueError("need 1 <= N_k <= N")
    return (N - N_k) / N


def increased_size(N_k, N, factor) -> int:
    # round first so that 1.01 * 100 lands on 101, not 102
    return min(N, math.ceil(round(factor * N_k, 9)))


def decide_sampling(g_norm, rho_N, rho_D, N_k, N, params: NtrParams):
    """Sample-size decision. Returns ``(next_N, keep_or_fresh, event)``."""
    if N_k >= N:
        return N, KEEP_SET, "S4"
    if g_norm < params.epsilon * h_saa(N_k, N):
        return increased_size(N_k, N, params.increase_factor), FRESH_SET, "S1"
    if rho_D < params.nu:
        return increased_size(N_k, N, params.increase_factor), FRESH_SET, "S2"
    if rho_N < params.eta:
        return N_k, KEEP_SET, "S0"
    return N_k, FRESH_SET, "S3"


def decide_acceptance(rho_N, rho_D, full_sample, params: NtrParams) -> bool:
    if full_sample:
        return rho_N >= params.eta
    return rho_N >= params.eta and rho_D >= params.nu


def update_radius(rho_N, p_norm, delta_k, params) -> float:
    if rho_N < params.eta1:
        return params.tau1 * delta_k
    if rho_N > params.eta2 and p_norm >= params.tau2 * delta_k:
        return min(params.tau3 * delta_k, params.delta_max)
    return delta_k


# -- shared iteration machinery ----------------------------------------------

class QuasiNewtonTR:
    """State and helpers shared by ASNTR and the STORM-like comparator."""

    def __init__(self, problem, params, w0):
        self.problem = problem
        self.params = params
        self.N = problem.n_samples
        self.w = np.array(w0, dtype=float)
        if self.w.shape != (problem.dim,):
            raise ValueError("w0 has the wrong dimension")
        self.k = 0
        self.delta = float(params.delta0)
        self.counter = GradientCounter()
        self.rng = np.random.default_rng(params.seed)
        self.lsr1 = LSR1(problem.dim, params.memory, params.gamma0, params.skip_tol)
        self.termination = None
        self._cache = None  # (f, g) valid for (self.w, self.batch)
        self.last_point = None  # (w_k, batch_k) of the latest iteration, for reporting
        self._warned_cap = False

    def default_n0(self):
        d = getattr(self.problem, "input_dim", None)
        return self.N if d is None else min(self.N, d + 1)

    def _value_grad(self, batch):
        if self._cache is not None:
            f, g = self._cache
            return f, g, True
        f, g = subsampled_value_and_gradient(self.problem, self.w, batch, self.counter)
        return f, g, False

    def _b_norm(self, sol=None):
        # the subproblem solve already has the spectrum of B; reuse it when available
        b = sol.lambda_max_abs if sol is not None else self.lsr1.spectral_norm_estimate()
        if b > self.params.L_cap and not self._warned_cap:
            log.warning("estimated |B| = %.3g exceeds L_cap = %.3g", b, self.params.L_cap)
            self._warned_cap = True
        return b

    def _check_cauchy(self, sol, g_norm, b_norm):
        ok = check_cauchy_fraction(sol, g_norm, b_norm, self.delta, self.params.cauchy_c)
        if not ok:
            log.warning("iteration %d: Cauchy decrease fraction violated (Q=%.3g)",
                        self.k, sol.model_value)
        return ok

    def _store_pair(self, s, y):
        p = self.params
        return self.lsr1.update(s, y, gamma_init(s, y, self.lsr1.gamma, p.gamma_min, p.gamma_max))

    def step(self):
        raise NotImplementedError

    def run(self, callback=None) -> RunResult:
        """Iterate until budget, gradient tolerance or iteration cap.

        ``callback(record, optimizer)`` runs after every iteration.
        """
        trace = []
        while self.termination is None:
            if self.k >= self.params.max_iter:
                self.termination = "max-iterations"
                break
            try:
                rec = self.step()
            except NonFiniteValueError as exc:
                log.error("iteration %d aborted: %s", self.k, exc)
                self.termination = "non-finite"
                break
            if rec is None:
                break
            trace.append(rec)
            if callback is not None:
                callback(rec, self)
        return RunResult(w=self.w.copy(), trace=trace, termination=self.termination,
                         n_grad=self.counter.count)


class ASNTR(QuasiNewtonTR):
    def __init__(self, problem, params: NtrParams, w0):
        super().__init__(problem, params, w0)
        n0 = params.N0 if params.N0 is not None else self.default_n0()
        self.batch = SampleIndexSet.draw(self.rng, min(n0, self.N), self.N)

    @property
    def N_k(self):
        return len(self.batch)

    def step(self):
        """One iteration. Returns the record, or None once a stopping rule fired."""
        if self.termination is not None:
            return None
        p = self.params
        N_k, full = self.N_k, self.batch.is_full
        base_cost = (0 if self._cache is not None else N_k) + (0 if full else p.D_size)
        if self.counter.count + base_cost > p.budget:
            self.termination = "budget-exhausted"
            return None

        self.last_point = (self.w, self.batch)
        f_k, g_k, reused = self._value_grad(self.batch)
        g_norm = float(np.linalg.norm(g_k))
        if full and g_norm <= p.grad_tol:
            self._cache = (f_k, g_k)
            self.termination = "gradient-tolerance"
            return None

        t_k = t_schedule(self.k, p.C1, p.exponent)
        tt_k = ttilde_schedule(self.k, p.C2, p.exponent)
        delta_k = self.delta

        if g_norm == 0.0:
            # stationary for this mini-batch only: no model step, grow the sample
            next_N = increased_size(N_k, self.N, p.increase_factor)
            rec = IterationRecord(
                k=self.k, N_k=N_k, delta_k=delta_k, rho_N=math.nan, rho_D=math.nan,
                t_k=t_k, ttilde_k=tt_k, accepted=False, event="S1", f_Nk_at_wk=f_k,
                g_norm=0.0, b_norm_est=self._b_norm(), N_g_cumulative=self.counter.count,
                q_value=0.0, g_reused=reused, delta_next=delta_k, N_next=next_N)
            self.batch = SampleIndexSet.draw(self.rng, next_N, self.N)
            self._cache = None
            self.k += 1
            return rec

        sol = solve_obs(self.lsr1, g_k, delta_k)
        b_norm = self._b_norm(sol)
        cauchy_ok = self._check_cauchy(sol, g_norm, b_norm)
        w_t = self.w + sol.p
        f_t = subsampled_value(self.problem, w_t, self.batch)
        r_N = rho_n(f_t, f_k, sol.model_value, delta_k, t_k)

        r_D = None
        if not full:
            dset = SampleIndexSet.draw(self.rng, min(p.D_size, self.N), self.N)
            fD_k, gbar = subsampled_value_and_gradient(self.problem, self.w, dset, self.counter)
            fD_t = subsampled_value(self.problem, w_t, dset)
            r_D = rho_d(fD_t, fD_k, float(gbar @ gbar), delta_k, tt_k)

        next_N, how, event = decide_sampling(g_norm, r_N, r_D, N_k, self.N, p)
        accepted = decide_acceptance(r_N, r_D, full, p)
        p_norm = float(np.linalg.norm(sol.p))
        self.delta = update_radius(r_N, p_norm, delta_k, p)

        stored = False
        g_t = None
        if accepted:
            _, g_t = subsampled_value_and_gradient(self.problem, w_t, self.batch, self.counter)
            stored = self._store_pair(w_t - self.w, g_t - g_k)
            self.w = w_t

        if how == KEEP_SET and next_N == N_k:
            self._cache = (f_t, g_t) if accepted else (f_k, g_k)
        else:
            self.batch = SampleIndexSet.draw(self.rng, next_N, self.N)
            self._cache = None

        rec = IterationRecord(
            k=self.k, N_k=N_k, delta_k=delta_k, rho_N=r_N, rho_D=r_D, t_k=t_k, ttilde_k=tt_k,
            accepted=accepted, event=event, f_Nk_at_wk=f_k, g_norm=g_norm, b_norm_est=b_norm,
            N_g_cumulative=self.counter.count, q_value=sol.model_value, p_norm=p_norm,
            g_reused=reused, pair_attempted=accepted, pair_stored=stored, cauchy_ok=cauchy_ok,
            delta_next=self.delta, N_next=next_N)
        self.k += 1
        return rec


def run(problem, params: NtrParams, w0, callback=None) -> RunResult:
    return ASNTR(problem, params, w0).run(callback)
