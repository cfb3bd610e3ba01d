"""C-index decomposition, the SurVED generative survival model, and censoring experiments."""

__version__ = "0.1.0"

from .concordance import (
    CIndexDecomposition,
    PairClass,
    PairCounts,
    classify_pair,
    concordance,
    count_pairs_exact,
    count_pairs_fast,
    decompose,
    verify_identity,
)
from .dataset import (
    SurvivalDataset,
    SurvivalRecord,
    apply_preprocess,
    fit_preprocess,
    load_csv,
    resample_folds,
    split_holdout,
)
from .kaplan_meier import StepSurvival, km_estimate, km_eval
