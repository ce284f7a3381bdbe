"""Limited-memory SR1 matrices in compact form.

    B = gamma * I + Psi @ Mmat @ Psi.T
    Psi  = Y - gamma * S
    Mmat = (D + Lo + Lo.T - gamma * S.T @ S)^-1

with D the diagonal and Lo the strictly lower triangle of S.T @ Y. Pairs are
stored oldest first. The stored window always reproduces the recursive SR1
update applied to the kept pairs in order, starting from gamma * I.
"""

from __future__ import annotations

import logging

import numpy as np

log = logging.getLogger(__name__)


def gamma_init(s, y, prev_gamma, gamma_min=1e-6, gamma_max=1e6, eps=1e-8):
    """Scale of B_0 = gamma * I from the latest pair: y.y / s.y, clamped.

    Falls back to ``prev_gamma`` when s.y is not safely positive.
    """
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    sy = float(s @ y)
    if sy <= eps * np.linalg.norm(s) * np.linalg.norm(y):
        return prev_gamma
    return float(np.clip((y @ y) / sy, gamma_min, gamma_max))


class LSR1:
    """Compact L-SR1 operator with FIFO pair memory.

    Parameters
    ----------
    n : int
        Dimension of the parameter space.
    memory : int
        Maximum number of stored curvature pairs.
    gamma : float
        Initial scale of B_0.
    skip_tol : float
        A pair is rejected if |(y - Bs).s| <= skip_tol * |s| |y - Bs|, or if the
        resulting middle matrix has condition number above 1 / skip_tol.
    """

    def __init__(self, n, memory=30, gamma=1.0, skip_tol=1e-8):
        if memory < 1:
            raise ValueError("memory must be at least 1")
        self.n = int(n)
        self.memory = int(memory)
        self.gamma = float(gamma)
        self.skip_tol = float(skip_tol)
        self._pv = None
        self.reset()

    # -- state ---------------------------------------------------------------

    def reset(self):
        self.S = np.zeros((self.n, 0))
        self.Y = np.zeros((self.n, 0))
        self.Psi = np.zeros((self.n, 0))
        self.Mmat = np.zeros((0, 0))

    @property
    def m(self) -> int:
        return self.S.shape[1]

    def middle(self):
        """D + Lo + Lo.T - gamma * S.T S for the stored pairs."""
        return _middle(self.S.T @ self.Y, self.S.T @ self.S, self.gamma)

    # -- operator ------------------------------------------------------------

    def apply(self, v):
        """B @ v in O(n m + m^2)."""
        v = np.asarray(v, dtype=float)
        out = self.gamma * v
        if self.m:
            out = out + self.Psi @ (self.Mmat @ (self.Psi.T @ v))
        return out

    b_apply = apply

    def dense(self) -> np.ndarray:
        return self.gamma * np.eye(self.n) + self.Psi @ self.Mmat @ self.Psi.T

    def spectral_norm_estimate(self, max_iter=100, tol=1e-6) -> float:
        """Power iteration on B, warm-started from the previous dominant vector."""
        if self.m == 0:
            return abs(self.gamma)
        v = self._pv
        if v is None or v.shape != (self.n,):
            v = np.random.default_rng(0).standard_normal(self.n)
        v = v / np.linalg.norm(v)
        est = 0.0
        for _ in range(max_iter):
            w = self.apply(v)
            new = float(np.linalg.norm(w))
            if new == 0.0:
                return 0.0
            v = w / new
            if abs(new - est) <= tol * new:
                est = new
                break
            est = new
        self._pv = v
        return est

    # -- updates -------------------------------------------------------------

    def _accepts(self, s, y, Psi, Mmat):
        Bs = self.gamma * s
        if Psi.shape[1]:
            Bs = Bs + Psi @ (Mmat @ (Psi.T @ s))
        r = y - Bs
        rn = np.linalg.norm(r)
        return rn > 0.0 and abs(r @ s) > self.skip_tol * np.linalg.norm(s) * rn

    def _replay(self, S, Y):
        """Keep, in order, every pair that passes the SR1 safeguards.

        Works on Gram matrices only: for each candidate j the residual
        r_j = y_j - B s_j of the model built from the pairs kept so far has
        r_j.s_j equal to the Schur complement of W in its bordered extension and
        |r_j|^2 expressible through Psi.T Psi. The conditioning test runs once on
        the final window; an offending pair is excluded and the pass repeated.
        """
        m = S.shape[1]
        Psi_all = Y - self.gamma * S
        W_all = _middle(S.T @ Y, S.T @ S, self.gamma)
        G = Psi_all.T @ Psi_all
        s_norm = np.sqrt(np.einsum("ij,ij->j", S, S))
        excluded = set()
        while True:
            kept = self._sequential_pass(W_all, G, s_norm, Psi_all, excluded)
            if not kept:
                return kept, np.zeros((self.n, 0)), np.zeros((0, 0))
            W = W_all[np.ix_(kept, kept)]
            if np.linalg.cond(W) * self.skip_tol <= 1.0:
                Mmat = np.linalg.inv(W)
                return kept, Psi_all[:, kept], 0.5 * (Mmat + Mmat.T)
            excluded.add(kept[-1])

    def _sequential_pass(self, W_all, G, s_norm, Psi_all, excluded):
        kept = []
        Minv = np.zeros((0, 0))
        for j in range(W_all.shape[0]):
            if j in excluded or not s_norm[j] > 0.0:
                continue
            b = W_all[kept, j]
            Mb = Minv @ b
            schur = W_all[j, j] - b @ Mb
            r2 = G[j, j] - 2.0 * (G[j, kept] @ Mb) + Mb @ G[np.ix_(kept, kept)] @ Mb
            if r2 <= 1e-10 * G[j, j]:
                # cancellation-prone: form the residual explicitly
                r = Psi_all[:, j] - Psi_all[:, kept] @ Mb
                r2 = float(r @ r)
            rn = np.sqrt(max(r2, 0.0))
            if not (rn > 0.0 and abs(schur) > self.skip_tol * s_norm[j] * rn):
                continue
            # bordered inverse of [[W, b], [b.T, W_jj]]
            k = len(kept)
            new = np.empty((k + 1, k + 1))
            new[:k, :k] = Minv + np.outer(Mb, Mb) / schur
            new[:k, k] = new[k, :k] = -Mb / schur
            new[k, k] = 1.0 / schur
            Minv = new
            kept.append(j)
        return kept

    def _install(self, S, Y, kept, Psi, Mmat):
        self.S = S[:, kept].copy()
        self.Y = Y[:, kept].copy()
        self.Psi = Psi
        self.Mmat = Mmat

    def try_update(self, s, y) -> bool:
        """Append the pair (s, y) if the SR1 update is well defined.

        Returns whether the pair was stored. When the memory is full the oldest
        pair is evicted and the remaining window is re-validated.
        """
        s = np.asarray(s, dtype=float)
        y = np.asarray(y, dtype=float)
        if s.shape != (self.n,) or y.shape != (self.n,):
            raise ValueError("pair dimension mismatch")
        if not np.linalg.norm(s) > 0.0 or not self._accepts(s, y, self.Psi, self.Mmat):
            return False
        S = np.column_stack([self.S, s])
        Y = np.column_stack([self.Y, y])
        if S.shape[1] > self.memory:
            S, Y = S[:, 1:], Y[:, 1:]
            kept, Psi, Mmat = self._replay(S, Y)
            if not kept or kept[-1] != S.shape[1] - 1:
                return False
        else:
            W = self.middle_with(S, Y)
            if np.linalg.cond(W) * self.skip_tol > 1.0:
                return False
            kept = list(range(S.shape[1]))
            Psi = Y - self.gamma * S
            Mmat = np.linalg.inv(W)
            Mmat = 0.5 * (Mmat + Mmat.T)
        self._install(S, Y, kept, Psi, Mmat)
        return True

    def update(self, s, y, gamma) -> bool:
        """Rescale B_0 to ``gamma`` and offer the pair (s, y) in a single rebuild.

        Equivalent to ``set_gamma(gamma)`` followed by ``try_update(s, y)``
        except that, with a full memory, the new pair is tested against the
        window that remains after evicting the oldest pair.
        """
        s = np.asarray(s, dtype=float)
        y = np.asarray(y, dtype=float)
        if s.shape != (self.n,) or y.shape != (self.n,):
            raise ValueError("pair dimension mismatch")
        gamma = float(gamma)
        if gamma == self.gamma or self.m == 0:
            self.gamma = gamma
            if self.m == 0:
                self.Psi = np.zeros((self.n, 0))
            return self.try_update(s, y)
        self.gamma = gamma
        full = self.m >= self.memory
        lo = 1 if full else 0
        S = np.column_stack([self.S[:, lo:], s])
        Y = np.column_stack([self.Y[:, lo:], y])
        kept, Psi, Mmat = self._replay(S, Y)
        stored = bool(kept) and kept[-1] == S.shape[1] - 1
        if not stored and full:
            S, Y = self.S, self.Y
            kept, Psi, Mmat = self._replay(S, Y)
        self._install(S, Y, kept, Psi, Mmat)
        return stored

    def middle_with(self, S, Y):
        return _middle(S.T @ Y, S.T @ S, self.gamma)

    def set_gamma(self, gamma) -> int:
        """Change the scale of B_0 and rebuild; returns the number of pairs dropped."""
        gamma = float(gamma)
        if gamma == self.gamma:
            return 0
        self.gamma = gamma
        if self.m == 0:
            return 0
        before = self.m
        S, Y = self.S, self.Y
        kept, Psi, Mmat = self._replay(S, Y)
        self._install(S, Y, kept, Psi, Mmat)
        if self.m < before:
            log.debug("gamma change dropped %d curvature pairs", before - self.m)
        return before - self.m


def _middle(SY, SS, gamma):
    Lo = np.tril(SY, -1)
    W = np.diag(np.diag(SY)) + Lo + Lo.T - gamma * SS
    return 0.5 * (W + W.T)
