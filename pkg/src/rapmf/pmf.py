"""Baseline low-rank factorization trained by full-batch gradient descent.

The squared loss lives in mapped [0, 1] rating space: each inner product
u_i . v_j passes through the logistic function before being compared with
the mapped rating, and predictions are unmapped back onto the 1..D scale.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import sparse

from .core import (
    Dataset,
    DivergenceError,
    Factors,
    Hyperparams,
    _freeze,
    _sigmoid,
    make_rng,
    unmap_rating,
)

__all__ = [
    "PmfModel",
    "predict",
    "predict_dataset",
    "predict_full",
    "pmf_objective",
    "pmf_gradients",
    "train_pmf",
    "init_factors",
]

INIT_SCALE = 0.1  # std dev of the random factor initialization


@dataclass(frozen=True)
class PmfModel:
    factors: Factors
    d_levels: int
    hyper: Hyperparams
    objective_trace: np.ndarray

    def __post_init__(self):
        trace = np.ascontiguousarray(np.asarray(self.objective_trace,
                                                dtype=np.float64))
        object.__setattr__(self, "objective_trace", _freeze(trace))


def init_factors(k: int, n_users: int, n_items: int, seed) -> Factors:
    """Small random starting factors shared by every trainer."""
    rng = make_rng(seed)
    u = INIT_SCALE * rng.standard_normal((k, n_users))
    v = INIT_SCALE * rng.standard_normal((k, n_items))
    return Factors(k, u, v)


def predict(factors: Factors, i: int, j: int, d_levels: int) -> float:
    """Predicted rating for one cell, always inside [1, D]."""
    if not 0 <= i < factors.n_users:
        raise ValueError(f"user index {i} out of range")
    if not 0 <= j < factors.n_items:
        raise ValueError(f"item index {j} out of range")
    g = _sigmoid(float(factors.u[:, i] @ factors.v[:, j]))
    return unmap_rating(float(g), d_levels)


def predict_dataset(factors: Factors, dataset: Dataset,
                    d_levels: int | None = None) -> np.ndarray:
    """Predicted ratings for every triplet cell of ``dataset``."""
    d = dataset.d_levels if d_levels is None else d_levels
    z = np.einsum("kt,kt->t", factors.u[:, dataset.users],
                  factors.v[:, dataset.items])
    return _sigmoid(z) * (d - 1) + 1.0


def predict_full(factors: Factors, d_levels: int) -> np.ndarray:
    """Dense (n_users, n_items) prediction matrix on the 1..D scale."""
    return _sigmoid(factors.u.T @ factors.v) * (d_levels - 1) + 1.0


def _mapped_ratings(dataset: Dataset) -> np.ndarray:
    return (dataset.ratings - 1.0) / (dataset.d_levels - 1)


def _objective(u, v, train: Dataset, t_x, hyper: Hyperparams) -> float:
    z = np.einsum("kt,kt->t", u[:, train.users], v[:, train.items])
    resid = t_x - _sigmoid(z)
    return float(
        0.5 * np.dot(resid, resid)
        + 0.5 * hyper.lambda_u * np.sum(u * u)
        + 0.5 * hyper.lambda_v * np.sum(v * v)
    )


def _gradients(u, v, train: Dataset, t_x, hyper: Hyperparams):
    users, items = train.users, train.items
    z = np.einsum("kt,kt->t", u[:, users], v[:, items])
    g = _sigmoid(z)
    coef = (g - t_x) * (g * (1.0 - g))
    w = sparse.csr_matrix((coef, (users, items)),
                          shape=(train.n_users, train.n_items))
    grad_u = (w @ v.T).T + hyper.lambda_u * u
    grad_v = (w.T @ u.T).T + hyper.lambda_v * v
    return grad_u, grad_v


def pmf_objective(factors: Factors, train: Dataset, hyper: Hyperparams) -> float:
    """Half squared error in mapped space plus Frobenius regularization."""
    return _objective(factors.u, factors.v, train, _mapped_ratings(train), hyper)


def pmf_gradients(factors: Factors, train: Dataset,
                  hyper: Hyperparams) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradient of :func:`pmf_objective` with respect to u and v."""
    return _gradients(factors.u, factors.v, train, _mapped_ratings(train), hyper)


def train_pmf(train: Dataset, hyper: Hyperparams, seed=None) -> PmfModel:
    """Run fixed-step full-batch gradient descent for ``hyper.iterations``.

    The objective is recorded after every step. A non-finite objective or
    parameter aborts with :class:`DivergenceError` naming the iteration.
    """
    eff_seed = hyper.seed if seed is None else int(seed)
    start = init_factors(hyper.k, train.n_users, train.n_items, eff_seed)
    u = start.u.copy()
    v = start.v.copy()
    t_x = _mapped_ratings(train)
    trace = np.empty(hyper.iterations)
    for t in range(hyper.iterations):
        grad_u, grad_v = _gradients(u, v, train, t_x, hyper)
        u = u - hyper.eta * grad_u
        v = v - hyper.eta * grad_v
        obj = _objective(u, v, train, t_x, hyper)
        if not (np.isfinite(obj) and np.all(np.isfinite(u))
                and np.all(np.isfinite(v))):
            raise DivergenceError(
                f"objective became non-finite at iteration {t}", iteration=t)
        trace[t] = obj
    return PmfModel(Factors(hyper.k, u, v), train.d_levels,
                    replace(hyper, seed=eff_seed), trace)
