"""Top-K sequential recommenders behind one scoring interface.

Two interchangeable models: an exact smoothed sequence-statistics oracle
(:mod:`apcsim.recommender.oracle`) and a trainable embedding + attention
model (:mod:`apcsim.recommender.neural`). Both expose ``similarity``,
``score_all`` and ``recommend`` with identical ranking semantics: exact
top-K by score over the vocabulary minus the seed, ties broken by ascending
song id.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Recommendation:
    """Exactly K songs in descending score order."""

    songs: list[str]
    scores: list[float]

    def __post_init__(self):
        if len(self.songs) != len(self.scores):
            raise ValueError("songs and scores must align")

    def __len__(self) -> int:
        return len(self.songs)

    def __contains__(self, song: str) -> bool:
        return song in set(self.songs)


def rank_top_k(
    vocab: Sequence[str],
    scores: np.ndarray,
    seed: Sequence[str],
    k: int,
    index: dict[str, int] | None = None,
) -> Recommendation:
    """Exact top-K over vocab \\ seed, deterministic tie-break by song id.

    `vocab` must be sorted ascending so that a stable sort on descending score
    breaks ties by ascending id. Passing the model's id->position map avoids
    rebuilding it per call.
    """
    if index is None:
        index = {s: i for i, s in enumerate(vocab)}
    masked = scores.astype(float, copy=True)
    excluded = 0
    for s in seed:
        i = index.get(s)
        if i is not None:
            masked[i] = -np.inf
            excluded += 1
    n_candidates = len(vocab) - excluded
    if k > n_candidates:
        raise ValueError(f"K={k} exceeds {n_candidates} available candidates")
    order = np.argsort(-masked, kind="stable")[:k]
    return Recommendation(songs=[vocab[i] for i in order], scores=[float(masked[i]) for i in order])


from .oracle import OracleConfig, OracleModel, score_oracle, train_oracle  # noqa: E402
from .neural import NeuralConfig, NeuralModel, grad_check, train_neural  # noqa: E402

__all__ = [
    "Recommendation",
    "rank_top_k",
    "OracleConfig",
    "OracleModel",
    "score_oracle",
    "train_oracle",
    "NeuralConfig",
    "NeuralModel",
    "grad_check",
    "train_neural",
]
