"""Response-probability models and observation-likelihood terms.

A response model assigns every (user, item, rating) combination a
probability of actually being rated. Two parameterizations are supported:

* rating-dominant: one logistic-squashed parameter per rating value, shared
  by all users and items;
* context-aware: a logistic link over rating offset plus user and item
  feature projections, g(delta_k + u_i . theta_u + v_j . theta_v).

The soft observation log-likelihood marries the response model to the
factorization: for every cell of the full grid it mixes the response
probability of each candidate rating with a Gaussian weight centered on the
model's current prediction, in mapped [0, 1] rating space. The private scan
functions below compute that double sum and the per-cell quantities its
gradients need in one vectorized pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    ContextAwareParams,
    Factors,
    Hyperparams,
    RatingDominantParams,
    ResponseParams,
    _sigmoid,
)

__all__ = [
    "response_prob",
    "alpha",
    "soft_response_loglik",
    "hard_response_loglik",
]


def response_prob(params: ResponseParams, factors: Factors, i: int, j: int,
                  k: int) -> float:
    """Probability that user i rates item j given the rating would be k."""
    if not 0 <= i < factors.n_users:
        raise ValueError(f"user index {i} out of range")
    if not 0 <= j < factors.n_items:
        raise ValueError(f"item index {j} out of range")
    if not 1 <= k <= params.d_levels:
        raise ValueError(f"rating {k} out of range 1..{params.d_levels}")
    if isinstance(params, RatingDominantParams):
        return float(_sigmoid(params.mu_raw[k - 1]))
    s = (params.delta[k - 1]
         + float(factors.u[:, i] @ params.theta_u)
         + float(factors.v[:, j] @ params.theta_v))
    return float(_sigmoid(s))


def alpha(mu: float, r_observed: bool) -> float:
    """Likelihood factor of one cell's response: mu if rated, 1 - mu if not."""
    if not 0.0 < mu < 1.0:
        raise ValueError(f"mu must lie strictly inside (0, 1), got {mu}")
    return mu if r_observed else 1.0 - mu


def _mapped_grid(d_levels: int) -> np.ndarray:
    return np.arange(d_levels, dtype=np.float64) / (d_levels - 1)


# ---------------------------------------------------------------------------
# Vectorized scans over the full n x m grid
# ---------------------------------------------------------------------------

@dataclass
class _RatingScan:
    total: float                     # sum over cells of log sum_k alpha_k N_k
    wz: np.ndarray | None            # sigma_r^2 times d(total)/d z_ij, per cell
    mu_sums: np.ndarray | None       # per rating: sum of +-N_k / denom


@dataclass
class _ContextScan:
    total: float
    wz: np.ndarray | None
    p_row: np.ndarray | None         # per user: sum_j sum_k C_k / denom
    p_col: np.ndarray | None         # per item: sum_i sum_k C_k / denom
    q: np.ndarray | None             # per rating: sum_ij C_k / denom


def _scan_rating_dominant(u, v, mu_raw, observed, sigma_r,
                          want_uv=False, want_mu=False) -> _RatingScan:
    d = mu_raw.shape[0]
    t_grid = _mapped_grid(d)
    gz = _sigmoid(u.T @ v)
    mu = _sigmoid(mu_raw)
    norm_c = 1.0 / (sigma_r * math.sqrt(2.0 * math.pi))
    inv2var = 1.0 / (2.0 * sigma_r * sigma_r)

    stack = np.empty((d,) + gz.shape) if want_mu else None
    denom = np.zeros_like(gz)
    num = np.zeros_like(gz) if want_uv else None
    for k in range(d):
        diff = t_grid[k] - gz
        nk = norm_c * np.exp(-(diff * diff) * inv2var)
        if want_mu:
            stack[k] = nk
        ak_nk = np.where(observed, mu[k], 1.0 - mu[k]) * nk
        denom += ak_nk
        if want_uv:
            num += ak_nk * diff

    total = float(np.log(denom).sum())
    wz = (num / denom) * (gz * (1.0 - gz)) if want_uv else None
    mu_sums = None
    if want_mu:
        signed_inv = np.where(observed, 1.0, -1.0) / denom
        mu_sums = np.einsum("kij,ij->k", stack, signed_inv)
    return _RatingScan(total, wz, mu_sums)


def _scan_context(u, v, delta, theta_u, theta_v, observed, sigma_r,
                  want_uv=False, want_params=False) -> _ContextScan:
    d = delta.shape[0]
    t_grid = _mapped_grid(d)
    gz = _sigmoid(u.T @ v)
    a = u.T @ theta_u                       # (n,)
    b = v.T @ theta_v                       # (m,)
    ab = a[:, None] + b[None, :]
    norm_c = 1.0 / (sigma_r * math.sqrt(2.0 * math.pi))
    inv2var = 1.0 / (2.0 * sigma_r * sigma_r)
    want_p = want_uv or want_params
    sgn = np.where(observed, 1.0, -1.0) if want_p else None

    stack = np.empty((d,) + gz.shape) if want_params else None
    csum = np.zeros_like(gz) if want_p else None
    denom = np.zeros_like(gz)
    num = np.zeros_like(gz) if want_uv else None
    for k in range(d):
        mk = _sigmoid(delta[k] + ab)
        diff = t_grid[k] - gz
        nk = norm_c * np.exp(-(diff * diff) * inv2var)
        ak_nk = np.where(observed, mk, 1.0 - mk) * nk
        denom += ak_nk
        if want_uv:
            num += ak_nk * diff
        if want_p:
            ck = nk * (mk * (1.0 - mk)) * sgn
            csum += ck
            if want_params:
                stack[k] = ck

    total = float(np.log(denom).sum())
    wz = (num / denom) * (gz * (1.0 - gz)) if want_uv else None
    p_row = p_col = q = None
    if want_p:
        p = csum / denom
        p_row = p.sum(axis=1)
        p_col = p.sum(axis=0)
    if want_params:
        q = np.einsum("kij,ij->k", stack, 1.0 / denom)
    return _ContextScan(total, wz, p_row, p_col, q)


def _check_mask(factors: Factors, observed_mask) -> np.ndarray:
    mask = np.asarray(observed_mask)
    if mask.shape != (factors.n_users, factors.n_items):
        raise ValueError(
            f"mask shape {mask.shape} does not match factors "
            f"({factors.n_users}, {factors.n_items})")
    return mask.astype(bool, copy=False)


def soft_response_loglik(factors: Factors, params: ResponseParams,
                         observed_mask, hyper: Hyperparams) -> float:
    """Weighted log-likelihood of the response pattern over every cell.

    Each cell contributes the log of a response-weighted mixture of
    Gaussians, one per candidate rating, centered on the model's mapped
    prediction with width ``hyper.sigma_r``. The whole double sum is scaled
    by ``hyper.beta``; beta = 0 returns exactly 0.
    """
    mask = _check_mask(factors, observed_mask)
    if hyper.beta == 0.0:
        return 0.0
    if isinstance(params, RatingDominantParams):
        scan = _scan_rating_dominant(factors.u, factors.v, params.mu_raw,
                                     mask, hyper.sigma_r)
    else:
        scan = _scan_context(factors.u, factors.v, params.delta,
                             params.theta_u, params.theta_v, mask,
                             hyper.sigma_r)
    return hyper.beta * scan.total


def hard_response_loglik(full_ratings, observed_mask, mu) -> float:
    """Winner-take-all response log-likelihood against known true ratings.

    Only usable when the full rating matrix is known (synthetic data); each
    cell contributes log mu_k if it was rated and log(1 - mu_k) otherwise,
    where k is the cell's true rating. ``mu`` holds the D probabilities.
    """
    full = np.asarray(full_ratings)
    mask = np.asarray(observed_mask, dtype=bool)
    if full.shape != mask.shape:
        raise ValueError("rating matrix and mask shapes differ")
    mu = np.asarray(mu, dtype=np.float64)
    if np.any(mu < 0.0) or np.any(mu > 1.0):
        raise ValueError("mu entries must lie in [0, 1]")
    d = mu.size
    if full.min() < 1 or full.max() > d:
        raise ValueError(f"ratings out of range 1..{d}")

    total = 0.0
    for k in range(1, d + 1):
        at_k = full == k
        n_obs = int(np.count_nonzero(at_k & mask))
        n_un = int(np.count_nonzero(at_k & ~mask))
        p = float(mu[k - 1])
        if n_obs:
            if p == 0.0:
                raise ValueError(
                    f"mu[{k}] = 0 contradicts an observed rating {k}")
            total += n_obs * math.log(p)
        if n_un:
            if p == 1.0:
                raise ValueError(
                    f"mu[{k}] = 1 contradicts an unobserved rating {k}")
            total += n_un * math.log1p(-p)
    return total
