"""Measurement: success, amplification, ranking quality, externalities.

Ranking metrics follow the RecSys-2018 playlist-continuation conventions:
binary-relevance NDCG with log2 discount, R-precision augmented by artist
matches (weight 0.25), and clicks counting ten-song batches until the first
relevant track.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Corpus, SeedSplit, SongId
from .stats import SongFrequencyTable
from .strategy import ManipulationLog

ARTIST_MATCH_WEIGHT = 0.25


# ---------------------------------------------------------------------------
# Per-list metrics


def ndcg(recommendation: Sequence[SongId], ground_truth: Sequence[SongId]) -> float:
    """Binary-relevance NDCG of one recommendation list.

    DCG uses gain 1/log2(rank+1) with ranks starting at 1; the normalizer is
    the ideal DCG of min(|G|, K) relevant items.
    """
    if len(ground_truth) == 0:
        raise ValueError("ndcg requires a non-empty ground truth")
    relevant = set(ground_truth)
    dcg = _dcg(recommendation, relevant)
    return dcg / _ideal_dcg(min(len(relevant), len(recommendation)))


def _dcg(recommendation: Sequence[SongId], relevant: set[SongId]) -> float:
    return sum(1.0 / math.log2(r + 1) for r, s in enumerate(recommendation, start=1) if s in relevant)


def _ideal_dcg(n: int) -> float:
    return sum(1.0 / math.log2(r + 1) for r in range(1, n + 1))


def r_precision(
    recommendation: Sequence[SongId],
    ground_truth: Sequence[SongId],
    artist_of: Mapping[SongId, str],
    artist_weight: float = ARTIST_MATCH_WEIGHT,
) -> float:
    """Track matches count 1, artist-only matches artist_weight, over the first |G| slots."""
    if len(ground_truth) == 0:
        raise ValueError("r_precision requires a non-empty ground truth")
    g = set(ground_truth)
    g_artists = {artist_of[s] for s in ground_truth if s in artist_of}
    score = 0.0
    for s in recommendation[: len(g)]:
        if s in g:
            score += 1.0
        elif artist_of.get(s) in g_artists:
            score += artist_weight
    return score / len(g)


def clicks(recommendation: Sequence[SongId], ground_truth: Sequence[SongId]) -> float:
    """Ten-song batches needed to reach the first relevant track.

    If no relevant track appears in the list, the penalty is floor(K/10) + 1.
    """
    relevant = set(ground_truth)
    for rank0, s in enumerate(recommendation):
        if s in relevant:
            return float(rank0 // 10)
    return float(len(recommendation) // 10 + 1)


# ---------------------------------------------------------------------------
# Success and amplification


def success_rate(model, seed_splits: Sequence[SeedSplit], target: SongId, k: int) -> float:
    """Fraction of seeds whose top-K recommendations contain the target."""
    if not seed_splits:
        raise ValueError("success_rate requires a non-empty test set")
    recs = batch_recommendations(model, [s.seed for s in seed_splits], k)
    return float(np.mean([target in set(r) for r in recs]))


def amplification(s_alpha: float, s_zero: float, alpha: float) -> float:
    """Test-time gain in target recommendations per unit of training-set effort."""
    if alpha <= 0:
        raise ValueError("amplification requires alpha > 0")
    return (s_alpha - s_zero) / alpha


@dataclass
class AmplificationReport:
    alpha: float
    s_alpha: float
    s_zero: float
    amplification: float
    per_fold: list[float] = field(default_factory=list)
    ci: tuple[float, float] | None = None


# ---------------------------------------------------------------------------
# Aggregated metric reports


@dataclass
class MetricsReport:
    variant: str  # clean | standard | adversarial | optimistic
    ndcg: float
    r_precision: float
    clicks: float
    n_seeds: int
    ndcg_ci: tuple[float, float] | None = None
    r_precision_ci: tuple[float, float] | None = None
    clicks_ci: tuple[float, float] | None = None


def batch_recommendations(model, seeds: Sequence[Sequence[SongId]], k: int) -> list[list[SongId]]:
    """Top-K lists for many seeds; uses the model's batch path when available."""
    from .recommender import rank_top_k

    if hasattr(model, "score_all_batch"):
        out = []
        chunk = 512
        for i in range(0, len(seeds), chunk):
            block = seeds[i : i + chunk]
            matrix = model.score_all_batch(block)
            out.extend(
                rank_top_k(model.vocab, matrix[j], block[j], k, index=model.index).songs
                for j in range(len(block))
            )
        return out
    return [model.recommend(seed, k).songs for seed in seeds]


def standard_metrics(
    recs: Sequence[Sequence[SongId]],
    seed_splits: Sequence[SeedSplit],
    artist_of: Mapping[SongId, str],
    variant: str = "standard",
) -> MetricsReport:
    arrays = metric_arrays(recs, seed_splits, artist_of)
    return _report_from_arrays(arrays, variant)


def metric_arrays(
    recs: Sequence[Sequence[SongId]],
    seed_splits: Sequence[SeedSplit],
    artist_of: Mapping[SongId, str],
    extra_relevant: SongId | None = None,
) -> dict[str, np.ndarray]:
    """Per-seed metric values; extra_relevant adds a bonus always-relevant song."""
    nd, rp, cl = [], [], []
    for rec, split in zip(recs, seed_splits):
        truth = split.ground_truth
        if extra_relevant is None:
            nd.append(ndcg(rec, truth))
            rp.append(r_precision(rec, truth, artist_of))
            cl.append(clicks(rec, truth))
        else:
            relevant = set(truth) | {extra_relevant}
            # The ideal reference stays the user's own ground truth: the bonus
            # song is pure upside, so the optimistic variant dominates the
            # standard one seed by seed.
            nd.append(_dcg(rec, relevant) / _ideal_dcg(min(len(set(truth)), len(rec))))
            rp.append(_r_precision_with_bonus(rec, truth, artist_of, extra_relevant))
            cl.append(clicks(rec, tuple(relevant)))
    return {"ndcg": np.asarray(nd), "r_precision": np.asarray(rp), "clicks": np.asarray(cl)}


def _r_precision_with_bonus(
    rec: Sequence[SongId],
    truth: Sequence[SongId],
    artist_of: Mapping[SongId, str],
    bonus: SongId,
) -> float:
    g = set(truth)
    g_artists = {artist_of[s] for s in truth if s in artist_of}
    score = 0.0
    for s in rec[: len(g)]:
        if s in g or s == bonus:
            score += 1.0
        elif artist_of.get(s) in g_artists:
            score += ARTIST_MATCH_WEIGHT
    return score / len(g)


def _report_from_arrays(arrays: Mapping[str, np.ndarray], variant: str) -> MetricsReport:
    return MetricsReport(
        variant=variant,
        ndcg=float(arrays["ndcg"].mean()),
        r_precision=float(arrays["r_precision"].mean()),
        clicks=float(arrays["clicks"].mean()),
        n_seeds=int(arrays["ndcg"].size),
    )


def adversarial_baseline(
    clean_recs: Sequence[Sequence[SongId]],
    seed_splits: Sequence[SeedSplit],
    hit_ids: set[str],
    artist_of: Mapping[SongId, str],
) -> MetricsReport:
    """Worst-case scenario: each target hit replaces the first relevant item.

    For seeds where the manipulated model recommends the target, the first
    relevant item of the clean list is deleted (later items shift up); other
    seeds keep their clean metrics.
    """
    modified = []
    for rec, split in zip(clean_recs, seed_splits):
        if split.playlist_id in hit_ids:
            relevant = set(split.ground_truth)
            rec = list(rec)
            for i, s in enumerate(rec):
                if s in relevant:
                    del rec[i]
                    break
        modified.append(rec)
    arrays = metric_arrays(modified, seed_splits, artist_of)
    return _report_from_arrays(arrays, "adversarial")


def optimistic_metrics(
    manip_recs: Sequence[Sequence[SongId]],
    seed_splits: Sequence[SeedSplit],
    target: SongId,
    artist_of: Mapping[SongId, str],
) -> MetricsReport:
    """Thought experiment: the target song counts as a relevant recommendation."""
    arrays = metric_arrays(manip_recs, seed_splits, artist_of, extra_relevant=target)
    return _report_from_arrays(arrays, "optimistic")


# ---------------------------------------------------------------------------
# Externalities


@dataclass
class ExternalityReport:
    delta: dict[SongId, int]
    total_delta: int
    bins: list[dict]
    groups: dict[str, dict]


def recommendation_counts(recs: Iterable[Sequence[SongId]]) -> dict[SongId, int]:
    counts: dict[SongId, int] = {}
    for rec in recs:
        for s in rec:
            counts[s] = counts.get(s, 0) + 1
    return counts


def externality_delta(
    clean_recs: Sequence[Sequence[SongId]],
    manip_recs: Sequence[Sequence[SongId]],
    train_table: SongFrequencyTable,
    target: SongId,
    direct_anchors: set[SongId] = frozenset(),
    indirect_anchors: set[SongId] = frozenset(),
    n_bins: int = 50,
    ci_seed: int = 0,
) -> ExternalityReport:
    """Per-song change in recommendation counts between clean and manipulated models.

    Both models must be evaluated on the same seeds with the same K, which
    makes the total change exactly zero. Songs are aggregated into ``n_bins``
    evenly spaced bins on log10 training frequency; group summaries cover
    direct anchors, indirect anchors, the target, and everything else.
    """
    clean_counts = recommendation_counts(clean_recs)
    manip_counts = recommendation_counts(manip_recs)
    songs = set(clean_counts) | set(manip_counts) | set(train_table.counts) | {target}
    delta = {s: manip_counts.get(s, 0) - clean_counts.get(s, 0) for s in sorted(songs)}
    total = sum(delta.values())

    binned_songs = sorted(s for s in songs if s != target and train_table.counts.get(s, 0) >= 1)
    log_freq = np.log10([train_table.counts[s] for s in binned_songs])
    lo = float(log_freq.min()) if binned_songs else 0.0
    hi = float(log_freq.max()) if binned_songs else 1.0
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, n_bins + 1)
    which = np.clip(np.digitize(log_freq, edges) - 1, 0, n_bins - 1)
    deltas = np.asarray([delta[s] for s in binned_songs], dtype=float)

    rng = np.random.default_rng(ci_seed)
    bins = []
    for b in range(n_bins):
        inside = deltas[which == b]
        row = {
            "bin": b,
            "log10_freq_lo": float(edges[b]),
            "log10_freq_hi": float(edges[b + 1]),
            "n_songs": int(inside.size),
            "mean_delta": float(inside.mean()) if inside.size else 0.0,
        }
        ci = _bootstrap_mean_ci(inside, rng)
        row["ci_low"], row["ci_high"] = ci
        bins.append(row)

    groups = {}
    group_sets = {
        "direct_anchors": set(direct_anchors),
        "indirect_anchors": set(indirect_anchors),
        "target": {target},
    }
    assigned = set().union(*group_sets.values())
    group_sets["others"] = songs - assigned
    for name, members in group_sets.items():
        values = np.asarray([delta[s] for s in sorted(members & songs)], dtype=float)
        ci = _bootstrap_mean_ci(values, rng)
        groups[name] = {
            "n_songs": int(values.size),
            "total_delta": float(values.sum()) if values.size else 0.0,
            "mean_delta": float(values.mean()) if values.size else 0.0,
            "ci_low": ci[0],
            "ci_high": ci[1],
        }

    return ExternalityReport(delta=delta, total_delta=total, bins=bins, groups=groups)


def _bootstrap_mean_ci(values: np.ndarray, rng: np.random.Generator, resamples: int = 500) -> tuple[float, float]:
    if values.size == 0:
        return (0.0, 0.0)
    if values.size == 1:
        return (float(values[0]), float(values[0]))
    means = rng.choice(values, size=(resamples, values.size), replace=True).mean(axis=1)
    return (float(np.percentile(means, 2.5)), float(np.percentile(means, 97.5)))


# ---------------------------------------------------------------------------
# Participant experience


@dataclass
class ParticipantReport:
    n_participants: int
    n_empty_seed: int
    n_empty_truth: int
    clean: MetricsReport | None
    manipulated: MetricsReport | None
    mean_overlap: float


def participant_experience(
    log: ManipulationLog,
    corpus: Corpus,
    clean_model,
    manip_model,
    k: int,
) -> ParticipantReport:
    """Evaluate each participant's own targeted context under both models.

    The seed is the participant's playlist up to the insertion point and the
    ground truth is the user-generated continuation. Placements at the very
    start have an empty seed (flagged; models fall back to their empty-context
    behaviour) and placements at the very end have no continuation to score
    (flagged and excluded from the ranking metrics).
    """
    by_id = corpus.by_id()
    seeds, splits = [], []
    n_empty_seed = n_empty_truth = 0
    overlap_seeds = []
    for placement in log.placements:
        p = by_id[placement.playlist_id]
        prefix = p.tracks[: placement.index]
        suffix = p.tracks[placement.index :]
        if len(prefix) == 0:
            n_empty_seed += 1
        overlap_seeds.append(prefix)
        if len(suffix) == 0:
            n_empty_truth += 1
            continue
        seeds.append(prefix)
        splits.append(SeedSplit(playlist_id=p.id, seed=prefix or (p.tracks[0],), ground_truth=suffix))
        # SeedSplit requires a non-empty seed; the stored seed is only used for
        # bookkeeping, scoring below uses the true (possibly empty) prefix.

    clean_recs = batch_recommendations(clean_model, seeds, k)
    manip_recs = batch_recommendations(manip_model, seeds, k)
    artist_of = corpus.artist_of
    clean_report = (
        _report_from_arrays(metric_arrays(clean_recs, splits, artist_of), "clean") if splits else None
    )
    manip_report = (
        _report_from_arrays(metric_arrays(manip_recs, splits, artist_of), "standard") if splits else None
    )

    overlap_clean = batch_recommendations(clean_model, overlap_seeds, k)
    overlap_manip = batch_recommendations(manip_model, overlap_seeds, k)
    overlaps = [
        len(set(a) & set(b)) / k for a, b in zip(overlap_clean, overlap_manip)
    ]
    return ParticipantReport(
        n_participants=len(log.placements),
        n_empty_seed=n_empty_seed,
        n_empty_truth=n_empty_truth,
        clean=clean_report,
        manipulated=manip_report,
        mean_overlap=float(np.mean(overlaps)) if overlaps else 0.0,
    )


# ---------------------------------------------------------------------------
# Context similarity (strategy inner workings)


@dataclass
class ContextSimilarityReport:
    rows: list[dict]
    n_contexts: int
    n_target_in_topk: int

    def summary(self) -> dict:
        if not self.rows:
            return {"n_contexts": 0}
        arr = lambda key: float(np.mean([r[key] for r in self.rows]))  # noqa: E731
        return {
            "n_contexts": self.n_contexts,
            "n_target_in_topk": self.n_target_in_topk,
            "mean_sim_anchor_clean": arr("sim_anchor_clean"),
            "mean_sim_anchor_manip": arr("sim_anchor_manip"),
            "mean_sim_target_clean": arr("sim_target_clean"),
            "mean_sim_target_manip": arr("sim_target_manip"),
        }


def context_similarity_report(
    clean_model,
    manip_model,
    log: ManipulationLog,
    corpus: Corpus,
    target: SongId,
    k: int,
) -> ContextSimilarityReport:
    """Similarity of anchors and the target with each targeted context.

    For every placement with an anchor, the targeted context is the playlist
    prefix that precedes the inserted target song. Reports the similarity of
    the anchor and of the target with that context under both models, plus the
    rank-K threshold score of each context.
    """
    by_id = corpus.by_id()
    rows = []
    n_hit = 0
    for placement in log.placements:
        if placement.anchor is None:
            continue
        p = by_id[placement.playlist_id]
        context = p.tracks[: placement.index]
        clean_scores = clean_model.score_all(context)
        manip_scores = manip_model.score_all(context)
        row = {
            "playlist_id": p.id,
            "anchor": placement.anchor,
            "anchor_kind": placement.anchor_kind,
            "sim_anchor_clean": _score_of(clean_model, clean_scores, placement.anchor),
            "sim_anchor_manip": _score_of(manip_model, manip_scores, placement.anchor),
            "sim_target_clean": _score_of(clean_model, clean_scores, target),
            "sim_target_manip": _score_of(manip_model, manip_scores, target),
            "threshold_clean": _rank_k_threshold(clean_scores, k),
            "threshold_manip": _rank_k_threshold(manip_scores, k),
        }
        row["target_in_topk_manip"] = bool(
            target in set(manip_model.recommend(context, k).songs)
        )
        n_hit += int(row["target_in_topk_manip"])
        rows.append(row)
    return ContextSimilarityReport(rows=rows, n_contexts=len(rows), n_target_in_topk=n_hit)


def _score_of(model, scores: np.ndarray, song: SongId) -> float:
    i = model.index.get(song)
    return float(scores[i]) if i is not None else float("nan")


def _rank_k_threshold(scores: np.ndarray, k: int) -> float:
    if k >= scores.size:
        return float(np.min(scores))
    return float(np.partition(scores, -k)[-k])


# ---------------------------------------------------------------------------
# Bootstrap


def bootstrap_ci(
    values: Sequence[float],
    level: float = 0.95,
    resamples: int = 2000,
    seed: int = 0,
) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean of per-fold values."""
    vals = np.asarray(values, dtype=float)
    if vals.size == 0:
        raise ValueError("bootstrap_ci requires at least one value")
    if vals.size < 2:
        return (float(vals[0]), float(vals[0]))
    rng = np.random.default_rng(seed)
    means = rng.choice(vals, size=(resamples, vals.size), replace=True).mean(axis=1)
    tail = (1.0 - level) / 2.0 * 100.0
    return (float(np.percentile(means, tail)), float(np.percentile(means, 100.0 - tail)))
