"""Metrics, protocol runners, sweeps, significance tests, gradient checks."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np

from .core import (
    ContextAwareParams,
    Dataset,
    DegenerateVarianceError,
    DivergenceError,
    Factors,
    Hyperparams,
    InsufficientDataError,
    ProbeFailureError,
    RatingDominantParams,
    make_rng,
)
from .pmf import predict_dataset, train_pmf
from .rapmf import (
    VARIANTS,
    rapmf_gradients_c,
    rapmf_gradients_r,
    rapmf_loglik,
    train_rapmf,
)
from . import pmf as _pmf
from .synth import ProtocolSplit

__all__ = [
    "ExperimentResult",
    "rmse",
    "train_model",
    "run_protocol",
    "cross_validate",
    "TTestResult",
    "paired_t_test",
    "relative_improvement",
    "SweepCell",
    "SweepResult",
    "grid_search",
    "GradCheckReport",
    "gradcheck",
    "gradcheck_model",
]

PROTOCOLS = ("traditional", "realistic", "adversarial")


@dataclass(frozen=True)
class ExperimentResult:
    variant: str
    protocol: str
    rmse: float
    n_test: int
    seed: int
    hyper: Hyperparams


def rmse(model, test: Dataset) -> float:
    """Root mean square error of the model's predictions on the 1..D scale."""
    if len(test) == 0:
        raise ValueError("cannot score an empty test set")
    preds = predict_dataset(model.factors, test, model.d_levels)
    err = preds - test.ratings
    return float(np.sqrt(np.dot(err, err) / len(test)))


def train_model(variant: str, train: Dataset, hyper: Hyperparams, seed=None):
    """Train any variant on a dataset; response variants see only the
    training cells as observed."""
    if variant == "pmf":
        return train_pmf(train, hyper, seed)
    if variant in VARIANTS:
        return train_rapmf(variant, train, train.observed_mask(), hyper, seed)
    raise ValueError(f"unknown variant {variant!r}")


def run_protocol(split: ProtocolSplit, variant: str, hyper: Hyperparams,
                 seed=None) -> list[ExperimentResult]:
    """Train once on the split's train set, score all three test sets.

    The validation set is never scored here; it exists for tuning only.
    """
    model = train_model(variant, split.train, hyper, seed)
    tests = {
        "traditional": split.test_traditional,
        "realistic": split.test_realistic,
        "adversarial": split.test_adversarial,
    }
    return [
        ExperimentResult(variant, name, rmse(model, ds), len(ds),
                         model.hyper.seed, model.hyper)
        for name, ds in tests.items()
    ]


def cross_validate(dataset: Dataset, variant: str, hyper: Hyperparams,
                   folds: int, seed=None) -> list[float]:
    """Per-fold RMSE from k-fold cross validation over the triplets.

    Folds partition the triplets with sizes differing by at most one; each
    fold is scored by a model trained on the remaining triplets.
    """
    if folds < 2:
        raise ValueError("need at least 2 folds")
    n = len(dataset)
    if n < folds:
        raise InsufficientDataError(f"{n} triplets cannot fill {folds} folds")
    rng = make_rng(hyper.seed if seed is None else seed)
    perm = rng.permutation(n)
    sizes = np.full(folds, n // folds)
    sizes[: n % folds] += 1
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    scores = []
    for f in range(folds):
        test_idx = perm[bounds[f]:bounds[f + 1]]
        train_idx = np.concatenate([perm[:bounds[f]], perm[bounds[f + 1]:]])
        model = train_model(variant, dataset.subset(train_idx), hyper, seed)
        scores.append(rmse(model, dataset.subset(test_idx)))
    return scores


# ---------------------------------------------------------------------------
# Significance testing
# ---------------------------------------------------------------------------

class TTestResult(NamedTuple):
    t_stat: float
    p_value: float
    significant: bool


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularized incomplete beta (Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-12:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def _betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b), accurate to ~1e-12."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    front = math.exp(math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                     + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _t_two_sided_p(t: float, df: int) -> float:
    return _betainc(0.5 * df, 0.5, df / (df + t * t))


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Two-sided paired t-test on the differences a - b.

    Identical samples give t = 0 and p = 1. Nonzero differences with zero
    variance raise :class:`DegenerateVarianceError` since the statistic is
    undefined there.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("samples must be 1-D and of equal length")
    n = a.size
    if n < 2:
        raise ValueError("need at least 2 pairs")
    d = a - b
    if np.all(d == 0.0):
        return TTestResult(0.0, 1.0, False)
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        raise DegenerateVarianceError(
            "paired differences are constant and nonzero")
    t = float(d.mean()) / (sd / math.sqrt(n))
    p = _t_two_sided_p(t, n - 1)
    return TTestResult(t, p, p < 0.05)


def relative_improvement(baseline_rmse: float, model_rmse: float) -> float:
    """Percent RMSE improvement over a baseline; positive means better."""
    if baseline_rmse <= 0.0:
        raise ValueError("baseline RMSE must be positive")
    return 100.0 * (baseline_rmse - model_rmse) / baseline_rmse


# ---------------------------------------------------------------------------
# Grid search
# ---------------------------------------------------------------------------

# grid keys and how they map onto Hyperparams fields
_GRID_FIELDS = {
    "lambda_uv": ("lambda_u", "lambda_v"),
    "lambda_u": ("lambda_u",),
    "lambda_v": ("lambda_v",),
    "lambda_mu": ("lambda_mu",),
    "beta": ("beta",),
    "eta": ("eta",),
    "sigma_r": ("sigma_r",),
}


@dataclass(frozen=True)
class SweepCell:
    assignment: dict
    validation_rmse: float | None
    error: str | None


@dataclass(frozen=True)
class SweepResult:
    variant: str
    best_hyper: Hyperparams
    best_rmse: float
    cells: tuple[SweepCell, ...]


def _apply_assignment(base: Hyperparams, assignment: Mapping[str, float]) -> Hyperparams:
    updates = {}
    for key, value in assignment.items():
        for field_name in _GRID_FIELDS[key]:
            updates[field_name] = float(value)
    return replace(base, **updates)


def grid_search(split: ProtocolSplit, variant: str,
                grids: Mapping[str, Sequence[float]], base_hyper: Hyperparams,
                seed=None) -> SweepResult:
    """Exhaustively evaluate every grid combination by validation RMSE.

    Training failures (divergence) are recorded in the affected cell and do
    not abort the sweep. Ties prefer stronger regularization, then smaller
    beta.
    """
    if not grids or any(len(v) == 0 for v in grids.values()):
        raise ValueError("grids must be non-empty")
    unknown = set(grids) - set(_GRID_FIELDS)
    if unknown:
        raise ValueError(f"unknown grid keys {sorted(unknown)}")
    keys = sorted(grids)
    cells = []
    for combo in itertools.product(*(grids[k] for k in keys)):
        assignment = dict(zip(keys, (float(c) for c in combo)))
        hyper = _apply_assignment(base_hyper, assignment)
        try:
            model = train_model(variant, split.train, hyper, seed)
            score = rmse(model, split.validation)
            cells.append(SweepCell(assignment, score, None))
        except DivergenceError as exc:
            cells.append(SweepCell(assignment, None, str(exc)))
    scored = [c for c in cells if c.error is None]
    if not scored:
        raise DivergenceError("every sweep cell failed to train")

    def preference(cell: SweepCell):
        hyper = _apply_assignment(base_hyper, cell.assignment)
        return (cell.validation_rmse, -hyper.lambda_u, -hyper.lambda_v,
                -hyper.lambda_mu, hyper.beta)

    best = min(scored, key=preference)
    return SweepResult(variant, _apply_assignment(base_hyper, best.assignment),
                       best.validation_rmse, tuple(cells))


# ---------------------------------------------------------------------------
# Finite-difference gradient checking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    worst_label: str
    n_params: int
    analytic: np.ndarray
    numeric: np.ndarray

    def __str__(self):
        return (f"max relative error {self.max_rel_error:.3e} "
                f"at {self.worst_label} over {self.n_params} parameters")


def gradcheck(objective: Callable[[np.ndarray], float], params: np.ndarray,
              analytic_grad: np.ndarray, epsilon: float = 1e-5,
              labels: Callable[[int], str] | None = None) -> GradCheckReport:
    """Compare an analytic gradient with central finite differences.

    The relative error for each coordinate uses the denominator
    max(|analytic|, |numeric|, 1e-8). Any non-finite probe value aborts
    with :class:`ProbeFailureError`.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    x0 = np.asarray(params, dtype=np.float64).ravel().copy()
    analytic = np.asarray(analytic_grad, dtype=np.float64).ravel()
    if analytic.shape != x0.shape:
        raise ValueError("analytic gradient shape mismatch")
    numeric = np.empty_like(x0)
    for idx in range(x0.size):
        x = x0.copy()
        x[idx] = x0[idx] + epsilon
        f_plus = objective(x)
        x[idx] = x0[idx] - epsilon
        f_minus = objective(x)
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise ProbeFailureError(
                f"objective non-finite while probing coordinate {idx}")
        numeric[idx] = (f_plus - f_minus) / (2.0 * epsilon)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    rel = np.abs(analytic - numeric) / denom
    worst = int(np.argmax(rel))
    label = labels(worst) if labels is not None else f"x[{worst}]"
    return GradCheckReport(float(rel[worst]), label, x0.size, analytic, numeric)


class _ParamBlocks:
    """Flatten named parameter blocks into one vector and back."""

    def __init__(self, blocks: Sequence[tuple[str, tuple[int, ...]]]):
        self.blocks = list(blocks)
        self.sizes = [int(np.prod(shape)) for _, shape in self.blocks]
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)])

    @property
    def total(self) -> int:
        return int(self.offsets[-1])

    def pack(self, arrays: Sequence[np.ndarray]) -> np.ndarray:
        return np.concatenate([np.asarray(a, dtype=np.float64).ravel()
                               for a in arrays])

    def unpack(self, x: np.ndarray) -> list[np.ndarray]:
        out = []
        for (name, shape), lo, hi in zip(self.blocks, self.offsets,
                                         self.offsets[1:]):
            out.append(x[lo:hi].reshape(shape))
        return out

    def label(self, idx: int) -> str:
        for (name, shape), lo, hi in zip(self.blocks, self.offsets,
                                         self.offsets[1:]):
            if lo <= idx < hi:
                coords = np.unravel_index(idx - lo, shape)
                return f"{name}[{','.join(str(c) for c in coords)}]"
        raise IndexError(idx)


def _random_instance(n_users: int, n_items: int, k: int, d_levels: int, seed):
    """A small random problem with every term of the objective active."""
    rng = make_rng(seed)
    u = 0.5 * rng.standard_normal((k, n_users))
    v = 0.5 * rng.standard_normal((k, n_items))
    cells = np.flatnonzero(rng.random(n_users * n_items) < 0.5)
    if cells.size == 0:
        cells = np.array([0])
    i = cells // n_items
    j = cells % n_items
    x = rng.integers(1, d_levels + 1, size=cells.size)
    train = Dataset(n_users, n_items, d_levels,
                    np.column_stack([i, j, x]))
    hyper = Hyperparams(k=k, lambda_u=0.03, lambda_v=0.07, lambda_mu=0.05,
                        beta=0.6, sigma_r=0.25, iterations=1)
    return u, v, train, hyper, rng


def gradcheck_model(variant: str, n_users: int = 8, n_items: int = 8,
                    k: int = 3, d_levels: int = 5, seed: int = 0,
                    epsilon: float = 1e-5) -> GradCheckReport:
    """Finite-difference check of a variant's gradients on a random instance."""
    u, v, train, hyper, rng = _random_instance(n_users, n_items, k,
                                               d_levels, seed)
    mask = train.observed_mask()

    if variant == "pmf":
        blocks = _ParamBlocks([("u", u.shape), ("v", v.shape)])
        x0 = blocks.pack([u, v])

        def objective(x):
            bu, bv = blocks.unpack(x)
            return -_pmf.pmf_objective(Factors(k, bu, bv), train, hyper)

        gu, gv = _pmf.pmf_gradients(Factors(k, u, v), train, hyper)
        analytic = blocks.pack([-gu, -gv])
    elif variant == "rapmf-r":
        mu_raw = rng.normal(0.0, 0.8, size=d_levels)
        blocks = _ParamBlocks([("u", u.shape), ("v", v.shape),
                               ("mu_raw", mu_raw.shape)])
        x0 = blocks.pack([u, v, mu_raw])

        def objective(x):
            bu, bv, bm = blocks.unpack(x)
            return rapmf_loglik(Factors(k, bu, bv), RatingDominantParams(bm),
                                train, mask, hyper)

        grads = rapmf_gradients_r(Factors(k, u, v), mu_raw, train, mask, hyper)
        analytic = blocks.pack(grads)
    elif variant == "rapmf-c":
        delta = rng.normal(0.0, 0.8, size=d_levels)
        theta_u = rng.normal(0.0, 0.5, size=k)
        theta_v = rng.normal(0.0, 0.5, size=k)
        blocks = _ParamBlocks([("u", u.shape), ("v", v.shape),
                               ("delta", delta.shape),
                               ("theta_u", theta_u.shape),
                               ("theta_v", theta_v.shape)])
        x0 = blocks.pack([u, v, delta, theta_u, theta_v])

        def objective(x):
            bu, bv, bd, btu, btv = blocks.unpack(x)
            return rapmf_loglik(Factors(k, bu, bv),
                                ContextAwareParams(bd, btu, btv),
                                train, mask, hyper)

        params = ContextAwareParams(delta, theta_u, theta_v)
        grads = rapmf_gradients_c(Factors(k, u, v), params, train, mask, hyper)
        analytic = blocks.pack(grads)
    else:
        raise ValueError(f"unknown variant {variant!r}")

    return gradcheck(objective, x0, analytic, epsilon, blocks.label)
