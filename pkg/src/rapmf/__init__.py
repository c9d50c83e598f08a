"""Matrix factorization collaborative filtering with explicit response models.

The package trains three model variants on sparse rating data:

* ``pmf`` fits the ratings alone with a regularized low-rank factorization,
* ``rapmf-r`` adds a per-rating-value model of whether a cell gets rated,
* ``rapmf-c`` generalizes that with user and item response features.

It ships a synthetic benchmark generator whose missingness depends on the
rating values (missing not at random), a three-protocol evaluation harness,
and a command-line interface wiring everything into reproducible,
file-based pipelines.
"""

__version__ = "0.1.0"

from .core import (  # noqa: E402,F401
    ContextAwareParams,
    Dataset,
    DegenerateVarianceError,
    DivergenceError,
    Factors,
    Hyperparams,
    InsufficientDataError,
    ProbeFailureError,
    RatingDominantParams,
    TripletFormatError,
    load_triplets,
    logistic,
    map_rating,
    save_triplets,
    unmap_rating,
)
from .synth import (  # noqa: E402,F401
    ProtocolSplit,
    SyntheticConfig,
    TruthBundle,
    benchmark_config,
    generate_truth_bundle,
    split_protocols,
)
from .pmf import PmfModel, predict, train_pmf  # noqa: E402,F401
from .response import (  # noqa: E402,F401
    alpha,
    hard_response_loglik,
    response_prob,
    soft_response_loglik,
)
from .rapmf import RapmfModel, rapmf_loglik, train_rapmf  # noqa: E402,F401
from .evaluate import (  # noqa: E402,F401
    ExperimentResult,
    cross_validate,
    gradcheck,
    grid_search,
    paired_t_test,
    relative_improvement,
    rmse,
    run_protocol,
    train_model,
)
