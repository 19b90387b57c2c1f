"""Authenticity-constrained playlist manipulation strategies.

All strategies insert one agreed-upon target song per collective playlist.
The coordinated strategies pick the insertion position from song statistics:
``inclust`` places the target directly before the most frequent song within
the collective (repeating on the remaining playlists), ``dirlof`` places it
right after each playlist's lowest-estimated-frequency song, and ``hybrid``
runs the first while anchors occur at least ``lam`` times, then falls back to
the second.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import Playlist, SongId
from .errors import ConfigError
from .stats import FrequencyEstimate, count_frequencies

BASELINE_KINDS = ("random", "at_the_end", "insert_at", "random_range")
COORDINATED_KINDS = ("inclust", "dirlof", "hybrid")


@dataclass
class StrategyConfig:
    """Which strategy to run and its knobs."""

    kind: str
    target: SongId
    insert_index: int = 0          # insert_at
    range_start: int = 0           # random_range
    range_end: int = 0
    lam: float = 10.0              # hybrid threshold; math.inf routes all to dirlof
    max_anchors: int | None = None  # inclust ablation limit
    freq_source: str = "full"      # full | partial | proxy (dirlof/hybrid)
    beta: float = 0.0              # partial-information fraction
    proxy_path: str | None = None
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in BASELINE_KINDS + COORDINATED_KINDS:
            raise ConfigError(f"unknown strategy kind {self.kind!r}")
        if not self.target:
            raise ConfigError("strategy needs a target song id")
        if self.lam < 1:
            raise ConfigError("lam must be >= 1")
        if self.kind == "random_range" and self.range_start > self.range_end:
            raise ConfigError("random_range needs range_start <= range_end")
        if self.freq_source not in ("full", "partial", "proxy"):
            raise ConfigError(f"unknown freq_source {self.freq_source!r}")
        if self.max_anchors is not None and self.max_anchors < 1:
            raise ConfigError("max_anchors must be >= 1")


@dataclass(frozen=True)
class Placement:
    """One insertion: where the target went and which anchor drove it."""

    playlist_id: str
    index: int
    anchor: SongId | None = None
    anchor_kind: str = "none"  # direct | indirect | none


@dataclass
class ManipulationLog:
    placements: list[Placement] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)  # (playlist_id, reason)
    config: StrategyConfig | None = None

    @property
    def anchor_counts(self) -> Counter:
        return Counter(p.anchor for p in self.placements if p.anchor is not None)

    def to_json(self) -> dict:
        return {
            "strategy": None if self.config is None else vars(self.config),
            "placements": [
                {"playlist_id": p.playlist_id, "index": p.index, "anchor": p.anchor, "anchor_kind": p.anchor_kind}
                for p in self.placements
            ],
            "skipped": [{"playlist_id": pid, "reason": reason} for pid, reason in self.skipped],
            "anchor_counts": dict(self.anchor_counts),
        }


def levenshtein(a: Sequence[SongId], b: Sequence[SongId]) -> int:
    """Edit distance over song-id sequences (insert/delete/substitute cost 1)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i]
        for j, y in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def check_authentic(original: Playlist, modified: Playlist) -> bool:
    """True iff the modification stays within edit distance 1."""
    return levenshtein(original.tracks, modified.tracks) <= 1


def insert_track(playlist: Playlist, index: int, song: SongId) -> Playlist:
    """New playlist with `song` inserted at gap `index` (0..L)."""
    if not (0 <= index <= len(playlist)):
        raise ValueError(f"insertion index {index} out of range for length {len(playlist)}")
    tracks = playlist.tracks[:index] + (song,) + playlist.tracks[index:]
    return Playlist(id=playlist.id, tracks=tracks)


def _split_pool(playlists: Sequence[Playlist], target: SongId, log: ManipulationLog) -> list[Playlist]:
    """Playlists eligible for insertion; ones already holding the target are skipped."""
    pool = []
    for p in playlists:
        if target in p.tracks:
            log.skipped.append((p.id, "target_already_present"))
        else:
            pool.append(p)
    return pool


def apply_baseline(playlists: Sequence[Playlist], config: StrategyConfig) -> tuple[list[Playlist], ManipulationLog]:
    """Uncoordinated insertion baselines: random / at_the_end / insert_at / random_range."""
    config.validate()
    if config.kind not in BASELINE_KINDS:
        raise ConfigError(f"{config.kind!r} is not a baseline strategy")
    rng = np.random.default_rng(config.seed)
    log = ManipulationLog(config=config)
    out = []
    for p in playlists:
        if config.target in p.tracks:
            log.skipped.append((p.id, "target_already_present"))
            out.append(p)
            continue
        length = len(p)
        if config.kind == "random":
            idx = int(rng.integers(0, length + 1))
        elif config.kind == "at_the_end":
            idx = length
        elif config.kind == "insert_at":
            idx = min(config.insert_index, length)
        else:  # random_range
            lo = min(config.range_start, length)
            hi = min(config.range_end, length)
            idx = int(rng.integers(lo, hi + 1))
        out.append(insert_track(p, idx, config.target))
        log.placements.append(Placement(playlist_id=p.id, index=idx, anchor=None, anchor_kind="none"))
    return out, log


def _inclust_rounds(
    pool: list[Playlist],
    target: SongId,
    log: ManipulationLog,
    modified: dict[str, Playlist],
    max_anchors: int | None,
    min_count: float,
) -> list[Playlist]:
    """Shared InClust loop; returns playlists left untouched.

    Each round recounts frequencies over the remaining pool, picks the most
    frequent song (ties broken by ascending id), inserts the target before its
    first occurrence in every remaining playlist that contains it, and drops
    those playlists from the pool. Stops when the pool is empty, the anchor
    budget is exhausted, or the best count falls below min_count.
    """
    rounds = 0
    while pool:
        if max_anchors is not None and rounds >= max_anchors:
            break
        counts = count_frequencies(pool)
        anchor = min(counts.counts, key=lambda s: (-counts.counts[s], s))
        if counts.counts[anchor] < min_count:
            break
        remaining = []
        for p in pool:
            if anchor in p.tracks:
                idx = p.tracks.index(anchor)
                modified[p.id] = insert_track(p, idx, target)
                log.placements.append(
                    Placement(playlist_id=p.id, index=idx, anchor=anchor, anchor_kind="indirect")
                )
            else:
                remaining.append(p)
        pool = remaining
        rounds += 1
    return pool


def apply_inclust(
    playlists: Sequence[Playlist],
    target: SongId,
    max_anchors: int | None = None,
    config: StrategyConfig | None = None,
) -> tuple[list[Playlist], ManipulationLog]:
    """Insert the target before each round's most frequent in-collective song."""
    log = ManipulationLog(config=config)
    pool = _split_pool(playlists, target, log)
    modified: dict[str, Playlist] = {}
    leftover = _inclust_rounds(pool, target, log, modified, max_anchors, min_count=1)
    for p in leftover:
        log.skipped.append((p.id, "max_anchors_reached"))
    return [modified.get(p.id, p) for p in playlists], log


def apply_dirlof(
    playlists: Sequence[Playlist],
    target: SongId,
    estimate: FrequencyEstimate,
    config: StrategyConfig | None = None,
) -> tuple[list[Playlist], ManipulationLog]:
    """Insert the target right after each playlist's rarest known song."""
    log = ManipulationLog(config=config)
    pool = _split_pool(playlists, target, log)
    modified: dict[str, Playlist] = {}
    for p in pool:
        _dirlof_one(p, target, estimate, modified, log)
    return [modified.get(p.id, p) for p in playlists], log


def _dirlof_one(
    p: Playlist,
    target: SongId,
    estimate: FrequencyEstimate,
    modified: dict[str, Playlist],
    log: ManipulationLog,
) -> None:
    known = [(s, estimate.lookup(s)) for s in p.tracks]
    known = [(s, v) for s, v in known if v is not None]
    if not known:
        log.skipped.append((p.id, "no_known_frequency"))
        return
    anchor = min(known, key=lambda sv: (sv[1], sv[0]))[0]
    idx = p.tracks.index(anchor) + 1  # after the anchor; appends when anchor is last
    modified[p.id] = insert_track(p, idx, target)
    log.placements.append(Placement(playlist_id=p.id, index=idx, anchor=anchor, anchor_kind="direct"))


def apply_hybrid(
    playlists: Sequence[Playlist],
    target: SongId,
    estimate: FrequencyEstimate,
    lam: float = 10.0,
    max_anchors: int | None = None,
    config: StrategyConfig | None = None,
) -> tuple[list[Playlist], ManipulationLog]:
    """InClust while the current best anchor occurs >= lam times, then DirLoF."""
    if lam < 1:
        raise ConfigError("lam must be >= 1")
    log = ManipulationLog(config=config)
    pool = _split_pool(playlists, target, log)
    modified: dict[str, Playlist] = {}
    leftover = _inclust_rounds(pool, target, log, modified, max_anchors, min_count=lam)
    for p in leftover:
        _dirlof_one(p, target, estimate, modified, log)
    return [modified.get(p.id, p) for p in playlists], log


def apply_strategy(
    playlists: Sequence[Playlist],
    config: StrategyConfig,
    estimate: FrequencyEstimate | None = None,
) -> tuple[list[Playlist], ManipulationLog]:
    """Dispatch on config.kind; coordinated strategies may need an estimate."""
    config.validate()
    if config.kind in BASELINE_KINDS:
        return apply_baseline(playlists, config)
    if config.kind == "inclust":
        return apply_inclust(playlists, config.target, max_anchors=config.max_anchors, config=config)
    if estimate is None:
        raise ConfigError(f"{config.kind} requires a frequency estimate")
    if config.kind == "dirlof":
        return apply_dirlof(playlists, config.target, estimate, config=config)
    return apply_hybrid(
        playlists, config.target, estimate, lam=config.lam, max_anchors=config.max_anchors, config=config
    )
