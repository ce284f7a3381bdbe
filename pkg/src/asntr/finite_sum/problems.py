"""Finite-sum objectives f(w) = (1/N) sum_i f_i(w) and their subsampled estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NonFiniteValueError


@dataclass(frozen=True)
class SampleIndexSet:
    """Strictly ascending subset of ``range(n_total)``."""

    indices: np.ndarray
    n_total: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.intp)
        if idx.ndim != 1:
            raise ValueError("indices must be one-dimensional")
        if idx.size == 0:
            raise ValueError("sample index set must be non-empty")
        if idx.size > self.n_total:
            raise ValueError("more indices than samples")
        if idx[0] < 0 or idx[-1] >= self.n_total:
            raise ValueError(f"indices must lie in [0, {self.n_total})")
        if idx.size > 1 and np.any(np.diff(idx) <= 0):
            raise ValueError("indices must be distinct and strictly ascending")
        idx.flags.writeable = False
        object.__setattr__(self, "indices", idx)

    @classmethod
    def full(cls, n_total: int) -> "SampleIndexSet":
        return cls(np.arange(n_total), n_total)

    @classmethod
    def draw(cls, rng: np.random.Generator, size: int, n_total: int) -> "SampleIndexSet":
        """Uniform draw without replacement."""
        if size >= n_total:
            return cls.full(n_total)
        return cls(np.sort(rng.choice(n_total, size=size, replace=False)), n_total)

    @property
    def is_full(self) -> bool:
        return self.indices.size == self.n_total

    def __len__(self) -> int:
        return int(self.indices.size)


class GradientCounter:
    """Cumulative number of per-sample gradient evaluations (N_g)."""

    def __init__(self, count: int = 0):
        self.count = int(count)

    def add(self, n: int) -> None:
        self.count += int(n)

    def __repr__(self):
        return f"GradientCounter({self.count})"


class FiniteSumProblem:
    """Base class. Subclasses implement ``sample_values`` and ``sample_value_grad``.

    ``sample_values(w, idx)`` returns the per-sample values f_i(w) for ``idx``;
    ``sample_value_grad(w, idx)`` returns those values together with the *mean*
    gradient over ``idx``. Both must be pure functions of their arguments.
    """

    n_samples: int
    dim: int
    input_dim: int | None = None

    def sample_values(self, w, idx):
        raise NotImplementedError

    def sample_value_grad(self, w, idx):
        raise NotImplementedError

    def full_value(self, w) -> float:
        return subsampled_value(self, w, SampleIndexSet.full(self.n_samples))

    def full_gradient(self, w) -> np.ndarray:
        return subsampled_gradient(self, w, SampleIndexSet.full(self.n_samples))


def _check(problem, w, s):
    if len(s) < 1:
        raise ValueError("sample index set must be non-empty")
    if s.n_total != problem.n_samples:
        raise ValueError("index set does not belong to this problem")
    w = np.asarray(w, dtype=float)
    if w.shape != (problem.dim,):
        raise ValueError(f"expected w of shape ({problem.dim},), got {w.shape}")
    return w


def _finite(x, what):
    if not np.all(np.isfinite(x)):
        raise NonFiniteValueError(f"non-finite {what}")
    return x


def subsampled_value(problem: FiniteSumProblem, w, s: SampleIndexSet) -> float:
    """Mean of f_i(w) over ``s``. Function evaluations are not charged to N_g."""
    w = _check(problem, w, s)
    vals = _finite(problem.sample_values(w, s.indices), "function value")
    return float(np.mean(vals))


def subsampled_gradient(problem: FiniteSumProblem, w, s: SampleIndexSet,
                        counter: GradientCounter | None = None) -> np.ndarray:
    """Mean of grad f_i(w) over ``s``; adds ``len(s)`` to ``counter``."""
    return subsampled_value_and_gradient(problem, w, s, counter)[1]


def subsampled_value_and_gradient(problem: FiniteSumProblem, w, s: SampleIndexSet,
                                  counter: GradientCounter | None = None):
    w = _check(problem, w, s)
    vals, grad = problem.sample_value_grad(w, s.indices)
    _finite(vals, "function value")
    _finite(grad, "gradient")
    if counter is not None:
        counter.add(len(s))
    return float(np.mean(vals)), grad


class QuadraticProblem(FiniteSumProblem):
    """f_i(w) = 1/2 (w - c_i)^T A_i (w - c_i).

    ``matrices`` is either one shared (n, n) matrix or a stack of shape (N, n, n).
    """

    def __init__(self, centers, matrices):
        self.centers = np.asarray(centers, dtype=float)
        self.n_samples, self.dim = self.centers.shape
        self.input_dim = self.dim  # each sample is described by its centre
        A = np.asarray(matrices, dtype=float)
        if A.ndim == 2:
            A = np.broadcast_to(A, (self.n_samples, self.dim, self.dim))
        if A.shape != (self.n_samples, self.dim, self.dim):
            raise ValueError("matrices must have shape (n, n) or (N, n, n)")
        if not np.allclose(A, np.swapaxes(A, 1, 2)):
            raise ValueError("quadratic matrices must be symmetric")
        self.matrices = A

    def _residual(self, w, idx):
        r = w[None, :] - self.centers[idx]
        Ar = np.einsum("bij,bj->bi", self.matrices[idx], r)
        return r, Ar

    def sample_values(self, w, idx):
        r, Ar = self._residual(w, idx)
        return 0.5 * np.einsum("bi,bi->b", r, Ar)

    def sample_value_grad(self, w, idx):
        r, Ar = self._residual(w, idx)
        return 0.5 * np.einsum("bi,bi->b", r, Ar), Ar.mean(axis=0)

    def mean_hessian(self):
        return self.matrices.mean(axis=0)

    def minimizer(self):
        """Stationary point of the full objective (requires nonsingular mean Hessian)."""
        A = self.mean_hessian()
        rhs = np.einsum("bij,bj->i", self.matrices, self.centers) / self.n_samples
        return np.linalg.solve(A, rhs)


class MlpProblem(FiniteSumProblem):
    """Per-sample loss of a dense network over a dataset."""

    def __init__(self, net, dataset):
        if dataset.features.shape[1] != net.layer_sizes[0]:
            raise ValueError("feature dimension does not match the network input layer")
        if dataset.targets.shape[1] != net.layer_sizes[-1]:
            raise ValueError("target dimension does not match the network output layer")
        self.net = net
        self.dataset = dataset
        self.n_samples = dataset.features.shape[0]
        self.dim = net.n_params
        self.input_dim = net.layer_sizes[0]

    def sample_values(self, w, idx):
        return self.net.batch_loss(w, self.dataset.features[idx], self.dataset.targets[idx])

    def sample_value_grad(self, w, idx):
        return self.net.batch_loss_and_grad(w, self.dataset.features[idx],
                                            self.dataset.targets[idx])

    def predict(self, w, features=None):
        x = self.dataset.features if features is None else features
        return self.net.forward(w, x)
