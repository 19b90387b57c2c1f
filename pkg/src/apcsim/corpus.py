"""Playlist corpus: data model, MPD ingestion, synthetic generation, splits."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, ParseError, SchemaError

SongId = str
ArtistId = str


@dataclass(frozen=True)
class Playlist:
    """Ordered list of unique song ids owned by one user."""

    id: str
    tracks: tuple[SongId, ...]

    def __post_init__(self):
        if len(self.tracks) == 0:
            raise ValueError(f"playlist {self.id} is empty")
        if len(set(self.tracks)) != len(self.tracks):
            raise ValueError(f"playlist {self.id} contains duplicate tracks")

    def __len__(self) -> int:
        return len(self.tracks)


@dataclass(frozen=True, eq=True)
class Corpus:
    """Immutable collection of playlists plus the song->artist map."""

    playlists: tuple[Playlist, ...]
    artist_of: dict[SongId, ArtistId] = field(default_factory=dict)
    duplicates_dropped: int = field(default=0, compare=False)

    @property
    def n(self) -> int:
        return len(self.playlists)

    def songs(self) -> set[SongId]:
        return {s for p in self.playlists for s in p.tracks}

    def by_id(self) -> dict[str, Playlist]:
        return {p.id: p for p in self.playlists}

    def replace(self, replacements: dict[str, Playlist]) -> "Corpus":
        """New corpus with some playlists swapped out (same order, same ids)."""
        swapped = tuple(replacements.get(p.id, p) for p in self.playlists)
        return Corpus(playlists=swapped, artist_of=self.artist_of)


@dataclass(frozen=True)
class SeedSplit:
    """Test playlist cut into a seed context and the masked continuation."""

    playlist_id: str
    seed: tuple[SongId, ...]
    ground_truth: tuple[SongId, ...]

    def __post_init__(self):
        if len(self.seed) < 1 or len(self.ground_truth) < 1:
            raise ValueError("seed and ground truth must be non-empty")


@dataclass
class SyntheticConfig:
    """Parameters for the Zipf + Markov playlist generator."""

    n_songs: int = 2000
    n_artists: int = 200
    n_playlists: int = 20000
    length_min: int = 5
    length_max: int = 50
    length_mean: float = 15.0
    zipf_exponent: float = 1.0
    coherence: float = 0.35
    n_preferred: int = 3
    seed: int = 0

    def validate(self) -> None:
        if min(self.n_songs, self.n_artists, self.n_playlists, self.length_min) < 1:
            raise ConfigError("counts and length_min must be positive")
        if self.length_max < self.length_min:
            raise ConfigError("length_max < length_min")
        if not (self.length_min <= self.length_mean <= self.length_max):
            raise ConfigError("length_mean outside [length_min, length_max]")
        if self.zipf_exponent <= 0:
            raise ConfigError("zipf_exponent must be > 0")
        if not (0.0 <= self.coherence <= 1.0):
            raise ConfigError("coherence must be in [0, 1]")
        if self.length_max > self.n_songs:
            raise ConfigError("playlist length may exceed n_songs")


def load_mpd_slice(path: str | Path) -> Corpus:
    """Load one MPD-format JSON slice.

    Tracks are ordered by their "pos" field; a track_uri repeated within a
    playlist is kept at its first position only, with the number of dropped
    repeats recorded on the corpus.
    """
    raw_text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(raw_text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: malformed JSON at offset {e.pos}: {e.msg}", offset=e.pos) from e

    if not isinstance(data, dict) or "playlists" not in data:
        raise SchemaError(f"{path}: missing required field 'playlists'", field="playlists")

    playlists: list[Playlist] = []
    artist_of: dict[SongId, ArtistId] = {}
    dropped = 0
    for i, raw in enumerate(data["playlists"]):
        if "pid" not in raw:
            raise SchemaError(f"{path}: playlist #{i} missing required field 'pid'", field="pid")
        if "tracks" not in raw:
            raise SchemaError(f"{path}: playlist pid={raw['pid']} missing required field 'tracks'", field="tracks")
        entries = []
        for j, tr in enumerate(raw["tracks"]):
            for key in ("track_uri", "artist_uri", "pos"):
                if key not in tr:
                    raise SchemaError(
                        f"{path}: playlist pid={raw['pid']} track #{j} missing required field '{key}'",
                        field=key,
                    )
            entries.append((tr["pos"], tr["track_uri"], tr["artist_uri"]))
        entries.sort(key=lambda t: t[0])
        tracks: list[SongId] = []
        seen: set[SongId] = set()
        for _, uri, artist in entries:
            if uri in seen:
                dropped += 1
                continue
            seen.add(uri)
            tracks.append(uri)
            artist_of.setdefault(uri, artist)
        playlists.append(Playlist(id=str(raw["pid"]), tracks=tuple(tracks)))

    return Corpus(playlists=tuple(playlists), artist_of=artist_of, duplicates_dropped=dropped)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write the canonical newline-delimited JSON format plus the artist sidecar."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        for p in corpus.playlists:
            f.write(json.dumps({"id": p.id, "tracks": list(p.tracks)}, sort_keys=True))
            f.write("\n")
    sidecar = path.with_name(path.stem + ".artists.json")
    with open(sidecar, "w", encoding="utf-8") as f:
        json.dump(corpus.artist_of, f, sort_keys=True)


def load_corpus(path: str | Path) -> Corpus:
    """Read a corpus written by :func:`save_corpus`."""
    path = Path(path)
    playlists = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            obj = json.loads(line)
            playlists.append(Playlist(id=str(obj["id"]), tracks=tuple(obj["tracks"])))
    sidecar = path.with_name(path.stem + ".artists.json")
    artist_of = {}
    if sidecar.exists():
        artist_of = json.loads(sidecar.read_text(encoding="utf-8"))
    return Corpus(playlists=tuple(playlists), artist_of=artist_of)


def generate_synthetic(config: SyntheticConfig) -> Corpus:
    """Generate a long-tail playlist corpus.

    Song popularity follows a Zipf law over a permuted rank order (so song id
    order carries no popularity information). The first track of a playlist is
    a popularity draw; each following track comes from a mixture of the
    previous track's preferred-successor table (weight = coherence) and the
    global popularity distribution. Duplicates within a playlist are rejected
    and resampled. Fully deterministic given config.seed.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    n = config.n_songs
    song_ids = [f"s{i:05d}" for i in range(n)]

    # Popularity: Zipf weights assigned to songs in shuffled rank order.
    ranks = rng.permutation(n)
    weights = (ranks + 1.0) ** -config.zipf_exponent
    pop = weights / weights.sum()
    cum_pop = np.cumsum(pop)
    cum_pop[-1] = 1.0

    artist_idx = rng.integers(0, config.n_artists, size=n)
    artist_of = {song_ids[i]: f"a{artist_idx[i]:04d}" for i in range(n)}

    # Preferred successors: uniform over the catalogue so that sequential
    # structure is informative beyond popularity alone.
    preferred = rng.integers(0, n, size=(n, config.n_preferred))
    pref_weights = np.arange(config.n_preferred, 0, -1.0)
    pref_cum = np.cumsum(pref_weights / pref_weights.sum())
    pref_cum[-1] = 1.0

    lengths = config.length_min + rng.poisson(
        max(config.length_mean - config.length_min, 0.0), size=config.n_playlists
    )
    lengths = np.clip(lengths, config.length_min, config.length_max)

    def pop_draw() -> int:
        return int(np.searchsorted(cum_pop, rng.random(), side="left"))

    playlists = []
    for pi in range(config.n_playlists):
        length = int(lengths[pi])
        chosen: list[int] = [pop_draw()]
        used = {chosen[0]}
        while len(chosen) < length:
            prev = chosen[-1]
            nxt = -1
            for _ in range(50):
                if rng.random() < config.coherence:
                    k = int(np.searchsorted(pref_cum, rng.random(), side="left"))
                    cand = int(preferred[prev, k])
                else:
                    cand = pop_draw()
                if cand not in used:
                    nxt = cand
                    break
            if nxt < 0:
                # Rejection stalled: draw from the renormalized unused mass.
                unused = np.setdiff1d(np.arange(n), np.fromiter(used, dtype=int))
                w = pop[unused]
                nxt = int(rng.choice(unused, p=w / w.sum()))
            chosen.append(nxt)
            used.add(nxt)
        playlists.append(Playlist(id=f"p{pi:06d}", tracks=tuple(song_ids[i] for i in chosen)))

    return Corpus(playlists=tuple(playlists), artist_of=artist_of)


def split(corpus: Corpus, n_test: int, n_val: int, seed: int) -> tuple[Corpus, Corpus, Corpus]:
    """Disjoint, exhaustive (train, val, test) partition, deterministic in seed."""
    if n_test < 0 or n_val < 0 or n_test + n_val >= corpus.n:
        raise ConfigError(f"n_test + n_val must be < corpus size ({corpus.n})")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(corpus.n)
    test_idx = np.sort(perm[:n_test])
    val_idx = np.sort(perm[n_test : n_test + n_val])
    train_idx = np.sort(perm[n_test + n_val :])

    def take(idx: np.ndarray) -> Corpus:
        return Corpus(
            playlists=tuple(corpus.playlists[i] for i in idx),
            artist_of=corpus.artist_of,
        )

    return take(train_idx), take(val_idx), take(test_idx)


def make_seed_splits(corpus: Corpus, seed: int) -> tuple[list[SeedSplit], int]:
    """Split each test playlist into a seed prefix and masked continuation.

    Seed length is uniform on [1, min(10, L-1)]. Playlists shorter than two
    tracks cannot be split; they are skipped and counted in the second return
    value.
    """
    rng = np.random.default_rng(seed)
    splits: list[SeedSplit] = []
    skipped = 0
    for p in corpus.playlists:
        if len(p) < 2:
            skipped += 1
            continue
        hi = min(10, len(p) - 1)
        k = int(rng.integers(1, hi + 1))
        splits.append(SeedSplit(playlist_id=p.id, seed=p.tracks[:k], ground_truth=p.tracks[k:]))
    return splits, skipped


def sample_collective(corpus: Corpus, alpha: float, seed: int) -> set[str]:
    """Uniformly sample floor(alpha * N) distinct playlist ids."""
    if not (0.0 <= alpha <= 1.0):
        raise ConfigError("alpha must be in [0, 1]")
    size = int(np.floor(alpha * corpus.n))
    if size == 0:
        return set()
    rng = np.random.default_rng(seed)
    idx = rng.choice(corpus.n, size=size, replace=False)
    return {corpus.playlists[i].id for i in idx}


def mean_playlist_length(corpus: Corpus) -> float:
    return float(np.mean([len(p) for p in corpus.playlists]))


def collective_playlists(corpus: Corpus, member_ids: Iterable[str]) -> list[Playlist]:
    """Collective members' playlists, in corpus order (deterministic)."""
    members = set(member_ids)
    return [p for p in corpus.playlists if p.id in members]
