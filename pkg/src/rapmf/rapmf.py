"""Response-aware factorization: joint likelihood, gradients, trainer.

The training objective joins three parts: the beta-weighted response
log-likelihood over the full grid, the rating-fit term over the training
triplets, and Gaussian regularizers on every parameter block. Written with
sigma = hyper.sigma_r and the mapped-space squared error E of the baseline
trainer, the maximized quantity is

    L = beta * S - (E + lambda_mu / 2 * ||response params||^2) / sigma^2

where S is the double sum computed by the response module's scans. The
public gradient functions return the exact gradient of L, which is what the
finite-difference checker probes. The trainer steps along sigma^2 * grad L
instead; that constant rescaling folds into the learning rate and makes a
beta = 0 run reproduce the baseline trainer's trajectory bit for bit.

Each iteration first updates u and v from gradients taken at the current
parameters (applied simultaneously), then updates the response parameters
with gradients recomputed at the new u and v.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import (
    ContextAwareParams,
    Dataset,
    DivergenceError,
    Factors,
    Hyperparams,
    RatingDominantParams,
    ResponseParams,
    _freeze,
    _sigmoid,
)
from .pmf import _gradients, _mapped_ratings, _objective, init_factors, pmf_objective
from .response import _check_mask, _scan_context, _scan_rating_dominant

__all__ = [
    "RapmfModel",
    "rapmf_loglik",
    "rapmf_gradients_r",
    "rapmf_gradients_c",
    "train_rapmf",
]

VARIANTS = ("rapmf-r", "rapmf-c")


@dataclass(frozen=True)
class RapmfModel:
    factors: Factors
    response: ResponseParams
    d_levels: int
    hyper: Hyperparams
    loglik_trace: np.ndarray

    def __post_init__(self):
        if self.response.d_levels != self.d_levels:
            raise ValueError("response params do not match the rating scale")
        trace = np.ascontiguousarray(np.asarray(self.loglik_trace,
                                                dtype=np.float64))
        object.__setattr__(self, "loglik_trace", _freeze(trace))


def _response_sq_norm(params: ResponseParams) -> float:
    if isinstance(params, RatingDominantParams):
        return float(np.dot(params.mu_raw, params.mu_raw))
    return float(np.dot(params.delta, params.delta)
                 + np.dot(params.theta_u, params.theta_u)
                 + np.dot(params.theta_v, params.theta_v))


def rapmf_loglik(factors: Factors, response: ResponseParams, train: Dataset,
                 observed_mask, hyper: Hyperparams) -> float:
    """The joint objective value; higher is better.

    Defined up to an additive constant, so values are only comparable
    between runs of this implementation.
    """
    mask = _check_mask(factors, observed_mask)
    if hyper.beta == 0.0:
        resp = 0.0
    elif isinstance(response, RatingDominantParams):
        resp = hyper.beta * _scan_rating_dominant(
            factors.u, factors.v, response.mu_raw, mask, hyper.sigma_r).total
    else:
        resp = hyper.beta * _scan_context(
            factors.u, factors.v, response.delta, response.theta_u,
            response.theta_v, mask, hyper.sigma_r).total
    penalty = (pmf_objective(factors, train, hyper)
               + 0.5 * hyper.lambda_mu * _response_sq_norm(response))
    return resp - penalty / (hyper.sigma_r * hyper.sigma_r)


def rapmf_gradients_r(factors: Factors, mu_raw, train: Dataset,
                      observed_mask, hyper: Hyperparams):
    """Exact ascent gradient of the rating-dominant objective.

    Returns (grad_u, grad_v, grad_mu) matching the shapes of u, v, and
    mu_raw.
    """
    mu_raw = np.asarray(mu_raw, dtype=np.float64)
    mask = _check_mask(factors, observed_mask)
    sig2 = hyper.sigma_r * hyper.sigma_r
    pg_u, pg_v = _gradients(factors.u, factors.v, train,
                            _mapped_ratings(train), hyper)
    if hyper.beta == 0.0:
        g_u, g_v = -pg_u, -pg_v
        g_mu = -hyper.lambda_mu * mu_raw
    else:
        scan = _scan_rating_dominant(factors.u, factors.v, mu_raw, mask,
                                     hyper.sigma_r, want_uv=True, want_mu=True)
        g_u = hyper.beta * (factors.v @ scan.wz.T) - pg_u
        g_v = hyper.beta * (factors.u @ scan.wz) - pg_v
        gp = _sigmoid(mu_raw)
        gp = gp * (1.0 - gp)
        g_mu = hyper.beta * sig2 * gp * scan.mu_sums - hyper.lambda_mu * mu_raw
    return g_u / sig2, g_v / sig2, g_mu / sig2


def rapmf_gradients_c(factors: Factors, params: ContextAwareParams,
                      train: Dataset, observed_mask, hyper: Hyperparams):
    """Exact ascent gradient of the context-aware objective.

    Returns (grad_u, grad_v, grad_delta, grad_theta_u, grad_theta_v). The
    u and v gradients carry an extra coupling term because the response
    probabilities depend on the factors through theta_u and theta_v.
    """
    mask = _check_mask(factors, observed_mask)
    sig2 = hyper.sigma_r * hyper.sigma_r
    pg_u, pg_v = _gradients(factors.u, factors.v, train,
                            _mapped_ratings(train), hyper)
    if hyper.beta == 0.0:
        g_u, g_v = -pg_u, -pg_v
        g_d = -hyper.lambda_mu * params.delta
        g_tu = -hyper.lambda_mu * params.theta_u
        g_tv = -hyper.lambda_mu * params.theta_v
    else:
        scan = _scan_context(factors.u, factors.v, params.delta,
                             params.theta_u, params.theta_v, mask,
                             hyper.sigma_r, want_uv=True, want_params=True)
        g_u = hyper.beta * (factors.v @ scan.wz.T
                            + sig2 * np.outer(params.theta_u, scan.p_row)) - pg_u
        g_v = hyper.beta * (factors.u @ scan.wz
                            + sig2 * np.outer(params.theta_v, scan.p_col)) - pg_v
        g_d = hyper.beta * sig2 * scan.q - hyper.lambda_mu * params.delta
        g_tu = (hyper.beta * sig2 * (factors.u @ scan.p_row)
                - hyper.lambda_mu * params.theta_u)
        g_tv = (hyper.beta * sig2 * (factors.v @ scan.p_col)
                - hyper.lambda_mu * params.theta_v)
    return g_u / sig2, g_v / sig2, g_d / sig2, g_tu / sig2, g_tv / sig2


def train_rapmf(variant: str, train: Dataset, observed_mask,
                hyper: Hyperparams, seed=None) -> RapmfModel:
    """Alternating gradient ascent for the requested variant.

    Per iteration: u and v step together on gradients taken at the current
    parameters, then the response parameters step on gradients recomputed
    at the updated u and v. The log-likelihood after every iteration is
    recorded; a non-finite value aborts with :class:`DivergenceError`.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
    eff_seed = hyper.seed if seed is None else int(seed)
    start = init_factors(hyper.k, train.n_users, train.n_items, eff_seed)
    u = start.u.copy()
    v = start.v.copy()
    d = train.d_levels
    rating_dominant = variant == "rapmf-r"
    mu_raw = np.zeros(d)
    delta = np.zeros(d)
    theta_u = np.zeros(hyper.k)
    theta_v = np.zeros(hyper.k)

    mask = np.asarray(observed_mask)
    if mask.shape != (train.n_users, train.n_items):
        raise ValueError(f"mask shape {mask.shape} does not match the grid")
    mask = mask.astype(bool, copy=False)

    t_x = _mapped_ratings(train)
    beta = hyper.beta
    sig2 = hyper.sigma_r * hyper.sigma_r
    eta = hyper.eta
    lam_mu = hyper.lambda_mu
    trace = np.empty(hyper.iterations)

    def raw_sq() -> float:
        if rating_dominant:
            return float(np.dot(mu_raw, mu_raw))
        return float(np.dot(delta, delta) + np.dot(theta_u, theta_u)
                     + np.dot(theta_v, theta_v))

    def loglik_from(resp_total: float) -> float:
        penalty = _objective(u, v, train, t_x, hyper) + 0.5 * lam_mu * raw_sq()
        return beta * resp_total - penalty / sig2

    for t in range(hyper.iterations):
        # gradients for u, v at the current parameters; the scan also yields
        # the response total, which completes the previous iteration's trace
        pg_u, pg_v = _gradients(u, v, train, t_x, hyper)
        if beta == 0.0:
            resp_total = 0.0
            g_u, g_v = -pg_u, -pg_v
        elif rating_dominant:
            scan = _scan_rating_dominant(u, v, mu_raw, mask, hyper.sigma_r,
                                         want_uv=True)
            resp_total = scan.total
            g_u = beta * (v @ scan.wz.T) - pg_u
            g_v = beta * (u @ scan.wz) - pg_v
        else:
            scan = _scan_context(u, v, delta, theta_u, theta_v, mask,
                                 hyper.sigma_r, want_uv=True)
            resp_total = scan.total
            g_u = beta * (v @ scan.wz.T + sig2 * np.outer(theta_u, scan.p_row)) - pg_u
            g_v = beta * (u @ scan.wz + sig2 * np.outer(theta_v, scan.p_col)) - pg_v

        cur = loglik_from(resp_total)
        if not (np.isfinite(cur) and np.all(np.isfinite(u))
                and np.all(np.isfinite(v))):
            it = max(t - 1, 0)
            raise DivergenceError(
                f"log-likelihood became non-finite at iteration {it}",
                iteration=it)
        if t > 0:
            trace[t - 1] = cur

        u = u + eta * g_u
        v = v + eta * g_v

        # response parameters step at the updated u, v
        if rating_dominant:
            if beta == 0.0:
                g_mu = -lam_mu * mu_raw
            else:
                scan_b = _scan_rating_dominant(u, v, mu_raw, mask,
                                               hyper.sigma_r, want_mu=True)
                gp = _sigmoid(mu_raw)
                gp = gp * (1.0 - gp)
                g_mu = beta * sig2 * gp * scan_b.mu_sums - lam_mu * mu_raw
            mu_raw = mu_raw + eta * g_mu
        else:
            if beta == 0.0:
                g_d = -lam_mu * delta
                g_tu = -lam_mu * theta_u
                g_tv = -lam_mu * theta_v
            else:
                scan_b = _scan_context(u, v, delta, theta_u, theta_v, mask,
                                       hyper.sigma_r, want_params=True)
                g_d = beta * sig2 * scan_b.q - lam_mu * delta
                g_tu = beta * sig2 * (u @ scan_b.p_row) - lam_mu * theta_u
                g_tv = beta * sig2 * (v @ scan_b.p_col) - lam_mu * theta_v
            delta = delta + eta * g_d
            theta_u = theta_u + eta * g_tu
            theta_v = theta_v + eta * g_tv

    # close the trace with the log-likelihood at the final parameters
    if beta == 0.0:
        final_total = 0.0
    elif rating_dominant:
        final_total = _scan_rating_dominant(u, v, mu_raw, mask,
                                            hyper.sigma_r).total
    else:
        final_total = _scan_context(u, v, delta, theta_u, theta_v, mask,
                                    hyper.sigma_r).total
    final = loglik_from(final_total)
    if not (np.isfinite(final) and np.all(np.isfinite(u))
            and np.all(np.isfinite(v))):
        it = hyper.iterations - 1
        raise DivergenceError(
            f"log-likelihood became non-finite at iteration {it}", iteration=it)
    trace[hyper.iterations - 1] = final

    response: ResponseParams
    if rating_dominant:
        response = RatingDominantParams(mu_raw)
    else:
        response = ContextAwareParams(delta, theta_u, theta_v)
    return RapmfModel(Factors(hyper.k, u, v), response, d,
                      replace(hyper, seed=eff_seed), trace)
