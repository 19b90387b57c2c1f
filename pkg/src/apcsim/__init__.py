"""apcsim: collective song insertion in playlist-continuation recommenders.

A simulator and library for studying how a coordinated group of playlist
owners can boost test-time recommendations of a new target song by inserting
it once per playlist at strategically chosen positions, plus the measurement
machinery (success, amplification, ranking quality, externalities) to
quantify the effect.
"""

__version__ = "0.1.0"

from .corpus import (
    Corpus,
    Playlist,
    SeedSplit,
    SyntheticConfig,
    generate_synthetic,
    load_corpus,
    load_mpd_slice,
    make_seed_splits,
    sample_collective,
    save_corpus,
    split,
)
from .stats import (
    FrequencyEstimate,
    SongFrequencyTable,
    count_frequencies,
    estimate_full,
    estimate_partial,
    estimate_proxy,
    gini,
    lorenz,
)
from .strategy import (
    ManipulationLog,
    Placement,
    StrategyConfig,
    apply_baseline,
    apply_dirlof,
    apply_hybrid,
    apply_inclust,
    apply_strategy,
    check_authentic,
    levenshtein,
)

__all__ = [
    "__version__",
    "Corpus",
    "Playlist",
    "SeedSplit",
    "SyntheticConfig",
    "generate_synthetic",
    "load_corpus",
    "load_mpd_slice",
    "make_seed_splits",
    "sample_collective",
    "save_corpus",
    "split",
    "FrequencyEstimate",
    "SongFrequencyTable",
    "count_frequencies",
    "estimate_full",
    "estimate_partial",
    "estimate_proxy",
    "gini",
    "lorenz",
    "ManipulationLog",
    "Placement",
    "StrategyConfig",
    "apply_baseline",
    "apply_dirlof",
    "apply_hybrid",
    "apply_inclust",
    "apply_strategy",
    "check_authentic",
    "levenshtein",
]
