"""Cold-start preference elicitation: ternary decision-tree rating
elicitation (single-item, hybrid, pairwise), non-personalized baselines, a
biased-MF recommender, and an offline simulation harness."""

__version__ = "0.1.0"

from .backend import active_backend, set_backend
from .baselines import StaticRanking, rank_entropy, rank_helf, rank_popularity, rank_variance
from .data import (
    DataError,
    DuplicateRatingError,
    ItemType,
    ParseError,
    PartitionState,
    RatingMatrix,
    RatingRangeError,
    Scale,
    SyntheticConfig,
    filter_density,
    generate_synthetic,
    load_ratings,
    re_split,
    semi_binarize,
    split_users,
    write_ratings,
)
from .mf import MFHyperparams, MFModel, evaluate_rmse, fit
from .simulate import (
    IterationRecord,
    ProtocolError,
    SimConfig,
    SplitParams,
    StrategyParams,
    UserSession,
    prepare_partition,
    resolve_pair,
    resolve_single,
    run_comparison,
    run_simulation,
)
from .tree import (
    BranchLabel,
    ElicitationTree,
    ItemPair,
    Mode,
    PairStrategy,
    SingleItem,
    TreeConfig,
    TreeNode,
    build_tree,
    item_cosine_similarity,
    next_query,
    node_item_means,
    pair_branch,
    select_pair,
    select_single_split,
    split_error,
    top_k_candidates,
)

__all__ = [
    "__version__",
    "active_backend",
    "set_backend",
    "ItemType",
    "Scale",
    "RatingMatrix",
    "PartitionState",
    "SyntheticConfig",
    "DataError",
    "ParseError",
    "RatingRangeError",
    "DuplicateRatingError",
    "load_ratings",
    "write_ratings",
    "filter_density",
    "split_users",
    "re_split",
    "semi_binarize",
    "generate_synthetic",
    "MFHyperparams",
    "MFModel",
    "fit",
    "evaluate_rmse",
    "Mode",
    "PairStrategy",
    "SingleItem",
    "ItemPair",
    "BranchLabel",
    "TreeConfig",
    "TreeNode",
    "ElicitationTree",
    "build_tree",
    "next_query",
    "node_item_means",
    "split_error",
    "select_single_split",
    "top_k_candidates",
    "item_cosine_similarity",
    "select_pair",
    "pair_branch",
    "StaticRanking",
    "rank_popularity",
    "rank_variance",
    "rank_entropy",
    "rank_helf",
    "SimConfig",
    "SplitParams",
    "StrategyParams",
    "IterationRecord",
    "UserSession",
    "ProtocolError",
    "resolve_single",
    "resolve_pair",
    "prepare_partition",
    "run_simulation",
    "run_comparison",
]
