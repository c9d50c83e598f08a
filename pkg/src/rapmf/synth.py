"""Synthetic benchmark generator and protocol splitter.

Data is produced in two steps. First a dense ground-truth rating matrix is
generated from random low-rank factors. Then a response process decides
which cells a user ever encounters ("inspected") and, among those, which get
rated ("observed"), with the per-cell rating probability depending on the
rating value itself. That dependence makes the observed data missing not at
random, which is exactly what the response-aware trainers are built for.

The splitter carves the ground truth into the three evaluation protocols:
observed cells feed the train set and the traditional test set, inspected
but unrated cells form the adversarial test set, and the never-inspected
remainder is split into a small validation set and the realistic test set.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .core import (
    Dataset,
    Factors,
    InsufficientDataError,
    _freeze,
    _sigmoid,
    make_rng,
    load_triplets,
    save_triplets,
)
from .serialize import dumps_canonical

__all__ = [
    "SyntheticConfig",
    "TruthBundle",
    "ProtocolSplit",
    "benchmark_config",
    "generate_factors",
    "generate_full_ratings",
    "generate_response_masks",
    "generate_truth_bundle",
    "split_protocols",
    "save_bundle",
    "load_split",
    "load_truth",
]

SPLIT_NAMES = ("train", "test_traditional", "test_realistic",
               "test_adversarial", "validation")


@dataclass(frozen=True)
class SyntheticConfig:
    """Generator settings.

    p_rate[k - 1] is the probability that an inspected cell whose true
    rating is k actually gets rated. sigma_u and sigma_v are the standard
    deviations of the zero-mean latent factor priors.
    """

    n: int
    m: int
    d_levels: int
    k: int
    p_inspect: float
    p_rate: tuple[float, ...]
    sigma_u: float = 1.0
    sigma_v: float = 1.0

    def __post_init__(self):
        if min(self.n, self.m, self.k) < 1:
            raise ValueError("dimensions must be positive")
        if self.d_levels < 2:
            raise ValueError("need at least 2 rating levels")
        object.__setattr__(self, "p_rate", tuple(float(p) for p in self.p_rate))
        if len(self.p_rate) != self.d_levels:
            raise ValueError("p_rate must have one entry per rating level")
        probs = (self.p_inspect,) + self.p_rate
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.sigma_u <= 0 or self.sigma_v <= 0:
            raise ValueError("factor prior std devs must be positive")


def benchmark_config(n: int = 1000, m: int = 1000) -> SyntheticConfig:
    """Standard benchmark settings: 5 rating levels, rank 5, 20% inspection,
    and rating probabilities that rise steeply with the rating value."""
    return SyntheticConfig(
        n=n, m=m, d_levels=5, k=5,
        p_inspect=0.2,
        p_rate=(0.073, 0.068, 0.163, 0.308, 0.931),
    )


@dataclass(frozen=True)
class TruthBundle:
    """Fully known synthetic ground truth.

    full_ratings is the dense (n, m) integer rating matrix; inspected and
    observed are boolean masks with observed a subset of inspected.
    """

    full_ratings: np.ndarray
    inspected: np.ndarray
    observed: np.ndarray
    config: SyntheticConfig
    seed: int

    def __post_init__(self):
        full = np.ascontiguousarray(np.asarray(self.full_ratings, dtype=np.int64))
        insp = np.ascontiguousarray(np.asarray(self.inspected, dtype=bool))
        obs = np.ascontiguousarray(np.asarray(self.observed, dtype=bool))
        shape = (self.config.n, self.config.m)
        if full.shape != shape or insp.shape != shape or obs.shape != shape:
            raise ValueError("matrix shapes must match the config dims")
        if full.min() < 1 or full.max() > self.config.d_levels:
            raise ValueError("full ratings out of range")
        if np.any(obs & ~insp):
            raise ValueError("observed cells must be inspected")
        object.__setattr__(self, "full_ratings", _freeze(full))
        object.__setattr__(self, "inspected", _freeze(insp))
        object.__setattr__(self, "observed", _freeze(obs))

    @property
    def n_users(self) -> int:
        return self.config.n

    @property
    def n_items(self) -> int:
        return self.config.m

    @property
    def d_levels(self) -> int:
        return self.config.d_levels


@dataclass(frozen=True)
class ProtocolSplit:
    """The five pairwise-disjoint triplet sets carved from one bundle."""

    train: Dataset
    test_traditional: Dataset
    test_realistic: Dataset
    test_adversarial: Dataset
    validation: Dataset

    def __post_init__(self):
        parts = [getattr(self, name) for name in SPLIT_NAMES]
        dims = {(d.n_users, d.n_items, d.d_levels) for d in parts}
        if len(dims) != 1:
            raise ValueError("all splits must share the same grid")
        n, m, _ = next(iter(dims))
        flat = np.concatenate([d.users * m + d.items for d in parts])
        if np.unique(flat).size != flat.size:
            raise ValueError("splits must be pairwise disjoint")

    def as_dict(self) -> dict[str, Dataset]:
        return {name: getattr(self, name) for name in SPLIT_NAMES}


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

def generate_factors(config: SyntheticConfig, seed) -> Factors:
    """Draw latent factors column-wise from zero-mean spherical Gaussians."""
    rng = make_rng(seed)
    u = rng.normal(0.0, config.sigma_u, size=(config.k, config.n))
    v = rng.normal(0.0, config.sigma_v, size=(config.k, config.m))
    return Factors(config.k, u, v)


def generate_full_ratings(factors: Factors, d_levels: int) -> np.ndarray:
    """Dense integer ratings: ceil(g(u_i . v_j) * D), clipped into 1..D.

    Deterministic; the only randomness in the ground truth comes from the
    factors themselves.
    """
    g = _sigmoid(factors.u.T @ factors.v)
    x = np.ceil(g * d_levels).astype(np.int64)
    return np.clip(x, 1, d_levels)


def generate_response_masks(full_ratings: np.ndarray, config: SyntheticConfig,
                            seed) -> tuple[np.ndarray, np.ndarray]:
    """Draw the inspection and observation masks.

    Each cell is inspected independently with probability p_inspect; an
    inspected cell with true rating k is observed with probability
    p_rate[k - 1]. Observed is a subset of inspected by construction.
    """
    rng = make_rng(seed)
    shape = full_ratings.shape
    inspected = rng.random(shape) < config.p_inspect
    p_cell = np.asarray(config.p_rate, dtype=np.float64)[full_ratings - 1]
    observed = inspected & (rng.random(shape) < p_cell)
    return inspected, observed


def generate_truth_bundle(config: SyntheticConfig, seed: int) -> TruthBundle:
    """Run both generation steps under a single seeded stream."""
    rng = make_rng(seed)
    factors = generate_factors(config, rng)
    full = generate_full_ratings(factors, config.d_levels)
    inspected, observed = generate_response_masks(full, config, rng)
    return TruthBundle(full, inspected, observed, config, int(seed))


# ---------------------------------------------------------------------------
# Protocol split
# ---------------------------------------------------------------------------

def _cells_to_dataset(bundle: TruthBundle, cells: np.ndarray) -> Dataset:
    cells = np.sort(np.asarray(cells, dtype=np.int64))
    i = cells // bundle.n_items
    j = cells % bundle.n_items
    x = bundle.full_ratings[i, j]
    return Dataset(bundle.n_users, bundle.n_items, bundle.d_levels,
                   np.column_stack([i, j, x]))


def split_protocols(bundle: TruthBundle, seed) -> ProtocolSplit:
    """Partition the bundle's cells into the five protocol sets.

    Observed cells are split 50/50 into train and the traditional test set
    (the test set gets the odd cell). Every inspected-but-unrated cell goes
    into the adversarial test set. Never-inspected cells are split 10/90
    into validation and the realistic test set.
    """
    rng = make_rng(seed)

    obs = np.flatnonzero(bundle.observed.ravel())
    if obs.size < 2:
        raise InsufficientDataError(
            f"need at least 2 observed cells to split, got {obs.size}")
    perm = rng.permutation(obs.size)
    n_train = obs.size // 2
    train_cells = obs[perm[:n_train]]
    trad_cells = obs[perm[n_train:]]

    adv_cells = np.flatnonzero((bundle.inspected & ~bundle.observed).ravel())

    unin = np.flatnonzero(~bundle.inspected.ravel())
    perm2 = rng.permutation(unin.size)
    n_val = unin.size // 10
    val_cells = unin[perm2[:n_val]]
    real_cells = unin[perm2[n_val:]]

    return ProtocolSplit(
        train=_cells_to_dataset(bundle, train_cells),
        test_traditional=_cells_to_dataset(bundle, trad_cells),
        test_realistic=_cells_to_dataset(bundle, real_cells),
        test_adversarial=_cells_to_dataset(bundle, adv_cells),
        validation=_cells_to_dataset(bundle, val_cells),
    )


# ---------------------------------------------------------------------------
# Bundle directory layout
# ---------------------------------------------------------------------------

def _meta_dict(bundle: TruthBundle, split: ProtocolSplit) -> dict:
    total = bundle.n_users * bundle.n_items
    fractions = {
        "inspected": int(bundle.inspected.sum()) / total,
        "observed": int(bundle.observed.sum()) / total,
    }
    for name, ds in split.as_dict().items():
        fractions[name] = len(ds) / total
    return {
        "n_users": bundle.n_users,
        "n_items": bundle.n_items,
        "d_levels": bundle.d_levels,
        "seed": bundle.seed,
        "config": asdict(bundle.config),
        "fractions": fractions,
    }


def save_bundle(bundle: TruthBundle, split: ProtocolSplit, out_dir) -> None:
    """Write meta.json, cells.tsv, and one triplet file per split."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "meta.json").write_text(dumps_canonical(_meta_dict(bundle, split)),
                                   encoding="utf-8", newline="\n")

    n, m = bundle.n_users, bundle.n_items
    ii, jj = np.divmod(np.arange(n * m), m)
    xx = bundle.full_ratings.ravel()
    insp = bundle.inspected.ravel().astype(np.int64)
    obs = bundle.observed.ravel().astype(np.int64)
    lines = "\n".join(
        f"{i}\t{j}\t{x}\t{a}\t{b}"
        for i, j, x, a, b in zip(ii, jj, xx, insp, obs)
    )
    (out / "cells.tsv").write_text(lines + "\n", encoding="utf-8", newline="\n")

    for name, ds in split.as_dict().items():
        save_triplets(ds, out / f"{name}.tsv")


def load_split(bundle_dir) -> tuple[dict, ProtocolSplit]:
    """Read meta.json and the five split triplet files."""
    path = Path(bundle_dir)
    meta = json.loads((path / "meta.json").read_text(encoding="utf-8"))
    n, m, d = meta["n_users"], meta["n_items"], meta["d_levels"]
    parts = {name: load_triplets(path / f"{name}.tsv", n, m, d)
             for name in SPLIT_NAMES}
    return meta, ProtocolSplit(**parts)


def load_truth(bundle_dir) -> TruthBundle:
    """Reconstruct the TruthBundle from meta.json and cells.tsv."""
    path = Path(bundle_dir)
    meta = json.loads((path / "meta.json").read_text(encoding="utf-8"))
    config = SyntheticConfig(**{**meta["config"],
                                "p_rate": tuple(meta["config"]["p_rate"])})
    n, m = config.n, config.m
    full = np.empty((n, m), dtype=np.int64)
    inspected = np.zeros((n, m), dtype=bool)
    observed = np.zeros((n, m), dtype=bool)
    text = (path / "cells.tsv").read_text(encoding="utf-8")
    for line in text.splitlines():
        i, j, x, a, b = (int(p) for p in line.split("\t"))
        full[i, j] = x
        inspected[i, j] = bool(a)
        observed[i, j] = bool(b)
    return TruthBundle(full, inspected, observed, config, meta["seed"])
