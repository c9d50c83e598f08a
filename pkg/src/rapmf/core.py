"""Shared domain types, the rating-scale codec, and logistic primitives.

Everything downstream (generators, trainers, evaluators) builds on the types
and conventions defined here:

* ratings are integers on a 1..D scale and are mapped linearly onto [0, 1]
  for all internal numerics,
* indices are 0-based everywhere, including on disk,
* every value object is immutable after construction and safe to share,
* randomness always flows through an explicit seed or ``numpy`` Generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

__all__ = [
    "Dataset",
    "Factors",
    "Hyperparams",
    "RatingDominantParams",
    "ContextAwareParams",
    "ResponseParams",
    "InsufficientDataError",
    "DivergenceError",
    "DegenerateVarianceError",
    "ProbeFailureError",
    "TripletFormatError",
    "map_rating",
    "unmap_rating",
    "logistic",
    "make_rng",
    "load_triplets",
    "save_triplets",
]


class InsufficientDataError(ValueError):
    """Too little data for the requested operation."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite objective.

    ``iteration`` identifies the first iteration whose result was non-finite.
    """

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class DegenerateVarianceError(ValueError):
    """A statistic required nonzero variance but the sample has none."""


class ProbeFailureError(RuntimeError):
    """A finite-difference probe evaluated to a non-finite objective."""


class TripletFormatError(ValueError):
    """Malformed triplet file; carries the offending 1-based line number."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


def make_rng(seed: Union[int, np.random.Generator]) -> np.random.Generator:
    """Return a deterministic Generator; passes an existing Generator through."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(int(seed))


# ---------------------------------------------------------------------------
# Rating codec and logistic map
# ---------------------------------------------------------------------------

def map_rating(k, d_levels: int):
    """Map a rating in 1..D onto [0, 1]: k -> (k - 1) / (D - 1).

    Accepts scalars or arrays of integer ratings. Endpoints map to the
    endpoints: 1 -> 0.0 and D -> 1.0.
    """
    if d_levels < 2:
        raise ValueError(f"rating scale needs at least 2 levels, got {d_levels}")
    arr = np.asarray(k)
    if not np.all(arr == np.floor(arr)):
        raise ValueError("ratings must be integers")
    if np.any(arr < 1) or np.any(arr > d_levels):
        raise ValueError(f"rating out of range 1..{d_levels}")
    out = (np.asarray(k, dtype=np.float64) - 1.0) / (d_levels - 1)
    return float(out) if np.isscalar(k) or arr.ndim == 0 else out


def unmap_rating(p, d_levels: int):
    """Inverse of :func:`map_rating` on grid points: p -> p * (D - 1) + 1."""
    if d_levels < 2:
        raise ValueError(f"rating scale needs at least 2 levels, got {d_levels}")
    arr = np.asarray(p, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("mapped rating outside [0, 1]")
    out = arr * (d_levels - 1) + 1.0
    return float(out) if np.isscalar(p) or arr.ndim == 0 else out


def _sigmoid(x):
    """Numerically stable logistic function, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logistic(x):
    """Return (g(x), g'(x)) with g the logistic function.

    Stable for |x| up to ~700: large positive x saturates to 1 without
    overflow, large negative x underflows g smoothly to 0. The derivative
    g * (1 - g) lies in (0, 0.25].
    """
    g = _sigmoid(x)
    gp = g * (1.0 - g)
    if np.isscalar(x) or np.asarray(x).ndim == 0:
        return float(g), float(gp)
    return g, gp


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------

def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Dataset:
    """Sparse set of (user, item, rating) triplets on a fixed-size grid.

    ``triplets`` is an (n, 3) int64 array of 0-based user index, 0-based item
    index, and integer rating in 1..d_levels. Duplicate (user, item) pairs
    are rejected.
    """

    n_users: int
    n_items: int
    d_levels: int
    triplets: np.ndarray

    def __post_init__(self):
        if self.n_users < 1 or self.n_items < 1 or self.d_levels < 1:
            raise ValueError("dimensions must be positive")
        arr = np.asarray(self.triplets, dtype=np.int64)
        if arr.size == 0:
            arr = arr.reshape(0, 3)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise ValueError(f"triplets must have shape (n, 3), got {arr.shape}")
        arr = np.ascontiguousarray(arr)
        users, items, ratings = arr[:, 0], arr[:, 1], arr[:, 2]
        if arr.shape[0]:
            if users.min() < 0 or users.max() >= self.n_users:
                raise ValueError("user index out of range")
            if items.min() < 0 or items.max() >= self.n_items:
                raise ValueError("item index out of range")
            if ratings.min() < 1 or ratings.max() > self.d_levels:
                raise ValueError(f"rating out of range 1..{self.d_levels}")
            flat = users * self.n_items + items
            if np.unique(flat).size != flat.size:
                raise ValueError("duplicate (user, item) pair")
        object.__setattr__(self, "triplets", _freeze(arr))

    def __len__(self) -> int:
        return self.triplets.shape[0]

    @property
    def users(self) -> np.ndarray:
        return self.triplets[:, 0]

    @property
    def items(self) -> np.ndarray:
        return self.triplets[:, 1]

    @property
    def ratings(self) -> np.ndarray:
        return self.triplets[:, 2]

    def observed_mask(self) -> np.ndarray:
        """Dense boolean (n_users, n_items) indicator of the triplet cells."""
        mask = np.zeros((self.n_users, self.n_items), dtype=bool)
        mask[self.users, self.items] = True
        return mask

    def subset(self, indices) -> "Dataset":
        """New Dataset over the same grid keeping only the selected triplets."""
        return Dataset(self.n_users, self.n_items, self.d_levels,
                       self.triplets[np.asarray(indices)])


@dataclass(frozen=True)
class Factors:
    """Latent feature matrices: u is (k, n_users), v is (k, n_items)."""

    k: int
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.ascontiguousarray(np.asarray(self.u, dtype=np.float64))
        v = np.ascontiguousarray(np.asarray(self.v, dtype=np.float64))
        if u.ndim != 2 or v.ndim != 2:
            raise ValueError("factor matrices must be 2-D")
        if u.shape[0] != self.k or v.shape[0] != self.k:
            raise ValueError("factor row count must equal k")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("factor entries must be finite")
        object.__setattr__(self, "u", _freeze(u))
        object.__setattr__(self, "v", _freeze(v))

    @property
    def n_users(self) -> int:
        return self.u.shape[1]

    @property
    def n_items(self) -> int:
        return self.v.shape[1]


@dataclass(frozen=True)
class RatingDominantParams:
    """Response model with one free parameter per rating value.

    ``mu_raw`` holds the D pre-logistic parameters; the probability that a
    cell carrying rating k gets rated is g(mu_raw[k - 1]), identical for all
    users and items.
    """

    mu_raw: np.ndarray

    variant = "rapmf-r"

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.mu_raw, dtype=np.float64))
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("mu_raw must be a nonempty vector")
        if not np.all(np.isfinite(arr)):
            raise ValueError("mu_raw must be finite")
        object.__setattr__(self, "mu_raw", _freeze(arr))

    @property
    def d_levels(self) -> int:
        return self.mu_raw.size

    def probabilities(self) -> np.ndarray:
        """Per-rating response probabilities, strictly inside (0, 1)."""
        return _sigmoid(self.mu_raw)


@dataclass(frozen=True)
class ContextAwareParams:
    """Response model with rating, user, and item contributions.

    The probability that user i rates item j given rating k is
    g(delta[k - 1] + u_i . theta_u + v_j . theta_v).
    """

    delta: np.ndarray
    theta_u: np.ndarray
    theta_v: np.ndarray

    variant = "rapmf-c"

    def __post_init__(self):
        for name in ("delta", "theta_u", "theta_v"):
            arr = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float64))
            if arr.ndim != 1 or arr.size < 1:
                raise ValueError(f"{name} must be a nonempty vector")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, _freeze(arr))

    @property
    def d_levels(self) -> int:
        return self.delta.size

    @property
    def k(self) -> int:
        return self.theta_u.size


ResponseParams = Union[RatingDominantParams, ContextAwareParams]


@dataclass(frozen=True)
class Hyperparams:
    """Training configuration shared by all model variants.

    beta weighs the response model against the rating-fit term and must lie
    in [0, 1]; beta = 0 disables the response model entirely. sigma_r is the
    width of the response Gaussian in mapped [0, 1] units. The default of
    0.25 equals one rating step on a 5-level scale.
    """

    k: int = 5
    lambda_u: float = 0.01
    lambda_v: float = 0.01
    lambda_mu: float = 1.0
    beta: float = 0.1
    eta: float = 0.005
    sigma_r: float = 0.25
    iterations: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")
        if min(self.lambda_u, self.lambda_v, self.lambda_mu) < 0:
            raise ValueError("regularization weights must be nonnegative")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.sigma_r <= 0:
            raise ValueError("sigma_r must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")


# ---------------------------------------------------------------------------
# Triplet files: UTF-8, LF, one "user<TAB>item<TAB>rating" per line
# ---------------------------------------------------------------------------

def save_triplets(dataset: Dataset, path) -> None:
    """Write the dataset's triplets, one tab-separated line per triplet."""
    lines = [f"{i}\t{j}\t{x}" for i, j, x in dataset.triplets]
    text = "\n".join(lines)
    if lines:
        text += "\n"
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def _parse_triplet_line(line: str, lineno: int, n_users: int, n_items: int,
                        d_levels: int) -> tuple[int, int, int]:
    parts = line.split("\t")
    if len(parts) != 3:
        raise TripletFormatError(
            f"expected 3 tab-separated fields, got {len(parts)}", lineno)
    try:
        i, j, x = (int(p) for p in parts)
    except ValueError:
        raise TripletFormatError(f"non-integer field in {line!r}", lineno) from None
    if not 0 <= i < n_users:
        raise TripletFormatError(f"user index {i} out of range", lineno)
    if not 0 <= j < n_items:
        raise TripletFormatError(f"item index {j} out of range", lineno)
    if not 1 <= x <= d_levels:
        raise TripletFormatError(f"rating {x} out of range 1..{d_levels}", lineno)
    return i, j, x


def load_triplets(path, n_users: int, n_items: int, d_levels: int) -> Dataset:
    """Parse a triplet file into a Dataset, validating every line.

    Malformed or out-of-range lines raise :class:`TripletFormatError` with
    the 1-based line number.
    """
    text = Path(path).read_text(encoding="utf-8")
    rows = []
    lines = text.split("\n")
    for lineno, line in enumerate(lines, 1):
        if line == "" and lineno == len(lines):
            break  # trailing newline
        rows.append(_parse_triplet_line(line, lineno, n_users, n_items, d_levels))
    return Dataset(n_users, n_items, d_levels, np.array(rows, dtype=np.int64))
