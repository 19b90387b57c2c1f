"""Exact smoothed sequence-statistics recommender.

Scores a candidate by an interpolated mixture of successor frequencies: the
order-k term conditions on the seed's last k songs and carries weight
``interp_weight`` when that context was observed, with the remainder passed
down to order k-1, bottoming out at the unigram distribution. This is the
statistical behaviour a well-trained sequential model approximates, in exact
count form: deterministic, bit-reproducible, and fast to retrain.
"""

from __future__ import annotations

import json
import time
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..corpus import Corpus, SongId
from ..errors import ConfigError
from . import Recommendation, rank_top_k

CHECKPOINT_VERSION = 1


@dataclass
class OracleConfig:
    order: int = 2
    interp_weight: float = 0.8

    def validate(self) -> None:
        if self.order < 1:
            raise ConfigError("order must be >= 1")
        if not (0.0 < self.interp_weight < 1.0):
            raise ConfigError("interp_weight must be in (0, 1)")


@dataclass
class _ContextTable:
    """Successor counts for one context, in vectorized form."""

    song_idx: np.ndarray
    counts: np.ndarray
    total: int


@dataclass
class OracleModel:
    config: OracleConfig
    vocab: list[SongId]                       # ascending song ids
    index: dict[SongId, int]
    unigram: np.ndarray                       # float64 counts aligned to vocab
    total: int
    tables: list[dict[tuple, _ContextTable]]  # tables[k-1]: order-k contexts

    def score_all(self, seed: Sequence[SongId]) -> np.ndarray:
        """Scores for every vocabulary song given the seed, vectorized."""
        scores = self.unigram / self.total
        lam = self.config.interp_weight
        for k in range(1, self.config.order + 1):
            if len(seed) < k:
                break
            ctx = tuple(seed[-k:])
            table = self.tables[k - 1].get(ctx)
            if table is None:
                continue
            scores = scores * (1.0 - lam)
            scores[table.song_idx] += lam * (table.counts / table.total)
        return scores

    def similarity(self, candidate: SongId, seed: Sequence[SongId]) -> float:
        if candidate not in self.index:
            raise ValueError(f"candidate {candidate!r} not in vocabulary")
        return score_oracle(self, seed, candidate)

    def recommend(self, seed: Sequence[SongId], k: int) -> Recommendation:
        return rank_top_k(self.vocab, self.score_all(seed), seed, k, index=self.index)

    def save(self, path: str | Path) -> None:
        """Self-describing JSON checkpoint."""
        payload = {
            "version": CHECKPOINT_VERSION,
            "kind": "oracle",
            "config": vars(self.config),
            "vocab": self.vocab,
            "unigram": self.unigram.tolist(),
            "total": self.total,
            "tables": [
                {
                    "|".join(ctx): {
                        "song_idx": t.song_idx.tolist(),
                        "counts": t.counts.tolist(),
                        "total": t.total,
                    }
                    for ctx, t in table.items()
                }
                for table in self.tables
            ],
        }
        Path(path).write_text(json.dumps(payload), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "OracleModel":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("kind") != "oracle":
            raise ValueError(f"{path} is not an oracle checkpoint")
        config = OracleConfig(**payload["config"])
        vocab = payload["vocab"]
        tables: list[dict[tuple, _ContextTable]] = []
        for table in payload["tables"]:
            parsed = {}
            for key, t in table.items():
                parsed[tuple(key.split("|"))] = _ContextTable(
                    song_idx=np.asarray(t["song_idx"], dtype=int),
                    counts=np.asarray(t["counts"], dtype=float),
                    total=t["total"],
                )
            tables.append(parsed)
        return cls(
            config=config,
            vocab=vocab,
            index={s: i for i, s in enumerate(vocab)},
            unigram=np.asarray(payload["unigram"], dtype=float),
            total=payload["total"],
            tables=tables,
        )


def train_oracle(corpus: Corpus, config: OracleConfig | None = None, extra_songs: Sequence[SongId] = ()) -> OracleModel:
    """Count (last-m-song context -> next song) tables for all orders <= m.

    ``extra_songs`` are appended to the vocabulary with zero counts so that a
    clean model can score a target song that only exists in manipulated data.
    """
    config = config or OracleConfig()
    config.validate()
    if corpus.n == 0:
        raise ValueError("cannot train on an empty corpus")

    vocab = sorted(corpus.songs() | set(extra_songs))
    index = {s: i for i, s in enumerate(vocab)}

    unigram = np.zeros(len(vocab), dtype=float)
    raw: list[dict[tuple, Counter]] = [defaultdict(Counter) for _ in range(config.order)]
    for p in corpus.playlists:
        tracks = p.tracks
        for i, s in enumerate(tracks):
            unigram[index[s]] += 1.0
            if i == 0:
                continue
            for k in range(1, config.order + 1):
                if i - k < 0:
                    break
                raw[k - 1][tracks[i - k : i]][s] += 1

    tables: list[dict[tuple, _ContextTable]] = []
    for k in range(config.order):
        table = {}
        for ctx, counter in raw[k].items():
            songs = sorted(counter)
            table[ctx] = _ContextTable(
                song_idx=np.asarray([index[s] for s in songs], dtype=int),
                counts=np.asarray([counter[s] for s in songs], dtype=float),
                total=sum(counter.values()),
            )
        tables.append(table)

    return OracleModel(
        config=config,
        vocab=vocab,
        index=index,
        unigram=unigram,
        total=int(unigram.sum()),
        tables=tables,
    )


def score_oracle(model: OracleModel, seed: Sequence[SongId], candidate: SongId) -> float:
    """Scalar interpolated backoff score; independent of the vectorized path.

    Walks the count dictionaries directly: used as the brute-force reference
    that ``recommend`` must match on exhaustive enumeration.
    """
    i = model.index.get(candidate)
    if i is None:
        raise ValueError(f"candidate {candidate!r} not in vocabulary")
    lam = model.config.interp_weight
    score = float(model.unigram[i]) / model.total
    for k in range(1, model.config.order + 1):
        if len(seed) < k:
            break
        ctx = tuple(seed[-k:])
        table = model.tables[k - 1].get(ctx)
        if table is None:
            continue
        pos = np.searchsorted(table.song_idx, i)
        hit = pos < len(table.song_idx) and table.song_idx[pos] == i
        p_k = float(table.counts[pos]) / table.total if hit else 0.0
        score = lam * p_k + (1.0 - lam) * score
    return score
