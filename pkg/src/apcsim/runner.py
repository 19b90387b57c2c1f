"""Experiment orchestration: folds, strategy x alpha sweeps, reports.

Every random decision derives from (master_seed, fold index) via numpy seed
sequences, so a config plus master seed fully determines all oracle-backed
outputs. The clean model is trained once per fold and shared across all
strategy and alpha cells so that externality measurements isolate the effect
of the manipulated training data.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import evaluate
from .corpus import (
    Corpus,
    SyntheticConfig,
    collective_playlists,
    generate_synthetic,
    load_corpus,
    make_seed_splits,
    sample_collective,
    split,
)
from .errors import ConfigError
from .recommender import NeuralConfig, OracleConfig, train_neural, train_oracle
from .stats import (
    count_frequencies,
    estimate_full,
    estimate_partial,
    estimate_proxy,
    inequality_report,
)
from .strategy import StrategyConfig, apply_strategy

VERSION = "0.1.0"


@dataclass
class ExperimentConfig:
    corpus_path: str | None = None
    synthetic: SyntheticConfig | None = None
    n_test: int = 2000
    n_val: int = 1000
    folds: int = 5
    k: int = 50
    master_seed: int = 0
    target: str = "zz_target_song"
    recommender: str = "oracle"
    oracle: OracleConfig = field(default_factory=OracleConfig)
    neural: NeuralConfig = field(default_factory=NeuralConfig)
    strategies: list[StrategyConfig] = field(default_factory=list)
    alphas: list[float] = field(default_factory=lambda: [0.001])
    out_dir: str = "runs/experiment"
    bootstrap_resamples: int = 2000
    eval_externality: bool = True
    eval_participant: bool = True
    eval_context_similarity: bool = False

    def validate(self) -> None:
        if (self.corpus_path is None) == (self.synthetic is None):
            raise ConfigError("exactly one of corpus_path or synthetic must be set")
        if self.folds < 1:
            raise ConfigError("folds must be >= 1")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if any(not (0.0 <= a <= 1.0) for a in self.alphas):
            raise ConfigError("alphas must lie in [0, 1]")
        if self.recommender not in ("oracle", "neural"):
            raise ConfigError(f"unknown recommender {self.recommender!r}")
        if self.synthetic is not None:
            self.synthetic.validate()
        self.oracle.validate()
        self.neural.validate()
        for s in self.strategies:
            s.validate()
            if s.target != self.target:
                raise ConfigError("strategy target must match experiment target")

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = dict(raw)
        if "synthetic" in data and data["synthetic"] is not None:
            data["synthetic"] = _build(SyntheticConfig, data["synthetic"])
        if "oracle" in data:
            data["oracle"] = _build(OracleConfig, data["oracle"])
        if "neural" in data:
            data["neural"] = _build(NeuralConfig, data["neural"])
        target = data.get("target", cls.target)
        strategies = []
        for s in data.get("strategies", []):
            s = dict(s)
            s.setdefault("target", target)
            strategies.append(_build(StrategyConfig, s))
        data["strategies"] = strategies
        return cls(**data)


def _build(cls, raw: Any):
    if isinstance(raw, cls):
        return raw
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**raw)


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    """Read an experiment config from TOML or JSON (by file extension)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        raw = json.loads(text)
    else:
        try:
            import tomllib  # Python >= 3.11
        except ModuleNotFoundError:
            import tomli as tomllib
        raw = tomllib.loads(text)
    return ExperimentConfig.from_dict(raw)


def _fold_seeds(master_seed: int, fold: int) -> dict[str, int]:
    state = np.random.SeedSequence([master_seed, fold]).generate_state(6)
    names = ["split", "seed_splits", "collective", "strategy", "bootstrap", "model"]
    return {name: int(state[i]) for i, name in enumerate(names)}


@dataclass
class RunManifest:
    config: dict
    version: str = VERSION
    folds: list[dict] = field(default_factory=list)
    artifacts: dict[str, str] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    status: str = "incomplete"

    def save(self, path: Path) -> None:
        path.write_text(json.dumps(dataclasses.asdict(self), indent=2, default=str), encoding="utf-8")


def _config_echo(config: ExperimentConfig) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(config), default=str))


def _load_or_generate(config: ExperimentConfig) -> Corpus:
    if config.corpus_path is not None:
        return load_corpus(config.corpus_path)
    return generate_synthetic(config.synthetic)


def _train_model(config: ExperimentConfig, train: Corpus, val: Corpus, seed: int, target: str):
    if config.recommender == "oracle":
        return train_oracle(train, config.oracle, extra_songs=[target])
    neural_cfg = dataclasses.replace(config.neural, seed=seed)
    return train_neural(train, neural_cfg, val_corpus=val, extra_songs=[target])


def _build_estimate(strategy: StrategyConfig, pool: Corpus, members: set[str], seed: int):
    if strategy.kind in ("random", "at_the_end", "insert_at", "random_range", "inclust"):
        return None
    if strategy.freq_source == "full":
        return estimate_full(count_frequencies(pool.playlists))
    if strategy.freq_source == "partial":
        collective = collective_playlists(pool, members)
        remaining = [p for p in pool.playlists if p.id not in members]
        return estimate_partial(collective, remaining, strategy.beta, seed)
    if strategy.proxy_path is None:
        raise ConfigError("proxy freq_source requires proxy_path")
    return estimate_proxy(strategy.proxy_path)


def run_experiment(config: ExperimentConfig) -> RunManifest:
    """Run the full protocol and write reports under config.out_dir."""
    config.validate()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "raw").mkdir(exist_ok=True)
    manifest = RunManifest(config=_config_echo(config))
    manifest_path = out_dir / "manifest.json"

    started = time.perf_counter()
    try:
        corpus = _load_or_generate(config)
        if config.target in corpus.songs():
            raise ConfigError(f"target {config.target!r} already occurs in the clean corpus")

        results: list[dict] = []
        fold_records = []
        for fold in range(config.folds):
            fold_started = time.perf_counter()
            seeds = _fold_seeds(config.master_seed, fold)
            record = {"fold": fold, "seeds": seeds}

            train, val, test = split(corpus, config.n_test, config.n_val, seeds["split"])
            seed_splits, skipped_short = make_seed_splits(test, seeds["seed_splits"])
            record["n_seed_splits"] = len(seed_splits)
            record["skipped_short_playlists"] = skipped_short
            pool = Corpus(playlists=train.playlists + val.playlists, artist_of=corpus.artist_of)
            train_ids = {p.id for p in train.playlists}

            clean_model = _train_model(config, train, val, seeds["model"], config.target)
            clean_recs = evaluate.batch_recommendations(
                clean_model, [s.seed for s in seed_splits], config.k
            )
            s_zero = float(np.mean([config.target in set(r) for r in clean_recs]))
            clean_table = count_frequencies(train.playlists)
            clean_metrics = evaluate.standard_metrics(
                clean_recs, seed_splits, corpus.artist_of, variant="clean"
            )
            results.append(
                {
                    "fold": fold,
                    "strategy": "none",
                    "alpha": 0.0,
                    "s_alpha": s_zero,
                    "s_zero": s_zero,
                    "metrics": {"clean": dataclasses.asdict(clean_metrics)},
                }
            )

            # Inequality of the clean recommendation distribution.
            track_counts = evaluate.recommendation_counts(clean_recs)
            artist_counts: dict[str, int] = {}
            for s, c in track_counts.items():
                a = corpus.artist_of.get(s, "unknown")
                artist_counts[a] = artist_counts.get(a, 0) + c
            track_ineq = inequality_report(list(track_counts.values()))
            artist_ineq = inequality_report(list(artist_counts.values()))
            (out_dir / "raw" / f"inequality_fold{fold}.json").write_text(
                json.dumps(
                    {
                        "fold": fold,
                        "track": track_ineq.to_json(),
                        "artist": artist_ineq.to_json(),
                    }
                ),
                encoding="utf-8",
            )

            for strategy in config.strategies:
                for alpha in config.alphas:
                    cell = _run_cell(
                        config=config,
                        fold=fold,
                        seeds=seeds,
                        corpus=corpus,
                        pool=pool,
                        train_ids=train_ids,
                        clean_model=clean_model,
                        clean_recs=clean_recs,
                        clean_table=clean_table,
                        seed_splits=seed_splits,
                        strategy=strategy,
                        alpha=alpha,
                        s_zero=s_zero,
                    )
                    results.append(cell)

            record["seconds"] = time.perf_counter() - fold_started
            fold_records.append(record)

        # Bootstrap CIs over folds for every strategy x alpha cell.
        _attach_fold_cis(results, config)

        raw_path = out_dir / "raw" / "results.json"
        raw_path.write_text(json.dumps(results, indent=1), encoding="utf-8")
        manifest.folds = fold_records
        manifest.artifacts["results"] = str(raw_path)
        manifest.timings["total_seconds"] = time.perf_counter() - started
        manifest.status = "complete"
        manifest.save(manifest_path)
        emit_reports(out_dir)
        return manifest
    except Exception:
        manifest.status = "failed"
        manifest.timings["total_seconds"] = time.perf_counter() - started
        manifest.save(manifest_path)
        raise


def _run_cell(
    *,
    config: ExperimentConfig,
    fold: int,
    seeds: dict[str, int],
    corpus: Corpus,
    pool: Corpus,
    train_ids: set[str],
    clean_model,
    clean_recs,
    clean_table,
    seed_splits,
    strategy: StrategyConfig,
    alpha: float,
    s_zero: float,
) -> dict:
    """One (fold, strategy, alpha) experiment cell."""
    members = sample_collective(pool, alpha, seeds["collective"])
    col_playlists = collective_playlists(pool, members)
    estimate = _build_estimate(strategy, pool, members, seeds["collective"])
    strategy_cell = dataclasses.replace(strategy, seed=seeds["strategy"])
    modified, log = apply_strategy(col_playlists, strategy_cell, estimate)

    manip_pool = pool.replace({p.id: p for p in modified})
    manip_train = Corpus(
        playlists=tuple(p for p in manip_pool.playlists if p.id in train_ids),
        artist_of=corpus.artist_of,
    )
    manip_val = Corpus(
        playlists=tuple(p for p in manip_pool.playlists if p.id not in train_ids),
        artist_of=corpus.artist_of,
    )

    manip_model = _train_model(config, manip_train, manip_val, seeds["model"], config.target)
    manip_recs = evaluate.batch_recommendations(manip_model, [s.seed for s in seed_splits], config.k)
    s_alpha = float(np.mean([config.target in set(r) for r in manip_recs]))
    amp = evaluate.amplification(s_alpha, s_zero, alpha) if alpha > 0 else None

    hit_ids = {
        sp.playlist_id for sp, rec in zip(seed_splits, manip_recs) if config.target in set(rec)
    }
    metrics = {
        "standard": dataclasses.asdict(
            evaluate.standard_metrics(manip_recs, seed_splits, corpus.artist_of)
        ),
        "adversarial": dataclasses.asdict(
            evaluate.adversarial_baseline(clean_recs, seed_splits, hit_ids, corpus.artist_of)
        ),
        "optimistic": dataclasses.asdict(
            evaluate.optimistic_metrics(manip_recs, seed_splits, config.target, corpus.artist_of)
        ),
    }

    cell: dict[str, Any] = {
        "fold": fold,
        "strategy": strategy.kind,
        "alpha": alpha,
        "n_collective": len(col_playlists),
        "n_insertions": len(log.placements),
        "n_skipped": len(log.skipped),
        "s_alpha": s_alpha,
        "s_zero": s_zero,
        "amplification": amp,
        "metrics": metrics,
        "manipulation_log": log.to_json(),
    }

    manip_table = count_frequencies(manip_train.playlists)
    rec_counts = evaluate.recommendation_counts(manip_recs)
    cell["teaser"] = [
        {
            "song": s,
            "train_count": manip_table.counts.get(s, 0),
            "test_rec_count": rec_counts.get(s, 0),
            "is_target": s == config.target,
        }
        for s in sorted(set(manip_table.counts) | set(rec_counts) | {config.target})
    ]

    anchors = log.anchor_counts
    if estimate is not None or anchors:
        truth = count_frequencies(pool.playlists)
        cell["anchor_scatter"] = [
            {
                "anchor": a,
                "kind": next(p.anchor_kind for p in log.placements if p.anchor == a),
                "times_targeted": n,
                "estimated": (estimate.lookup(a) if estimate is not None else None),
                "true": truth.relative(a),
            }
            for a, n in sorted(anchors.items())
        ]

    if config.eval_externality:
        direct = {p.anchor for p in log.placements if p.anchor_kind == "direct"}
        indirect = {p.anchor for p in log.placements if p.anchor_kind == "indirect"}
        ext = evaluate.externality_delta(
            clean_recs,
            manip_recs,
            clean_table,
            config.target,
            direct_anchors=direct,
            indirect_anchors=indirect,
            ci_seed=seeds["bootstrap"],
        )
        cell["externality"] = {
            "total_delta": ext.total_delta,
            "bins": ext.bins,
            "groups": ext.groups,
            "target_delta": ext.delta.get(config.target, 0),
        }

    if config.eval_participant:
        part = evaluate.participant_experience(log, pool, clean_model, manip_model, config.k)
        cell["participant"] = {
            "n_participants": part.n_participants,
            "n_empty_seed": part.n_empty_seed,
            "n_empty_truth": part.n_empty_truth,
            "clean": None if part.clean is None else dataclasses.asdict(part.clean),
            "manipulated": None if part.manipulated is None else dataclasses.asdict(part.manipulated),
            "mean_overlap": part.mean_overlap,
        }

    if config.eval_context_similarity:
        ctx = evaluate.context_similarity_report(
            clean_model, manip_model, log, pool, config.target, config.k
        )
        cell["context_similarity"] = {"summary": ctx.summary(), "rows": ctx.rows}

    return cell


def _attach_fold_cis(results: list[dict], config: ExperimentConfig) -> None:
    cells: dict[tuple[str, float], list[dict]] = {}
    for row in results:
        if row["strategy"] == "none":
            continue
        cells.setdefault((row["strategy"], row["alpha"]), []).append(row)
    for (strategy, alpha), rows in cells.items():
        amps = [r["amplification"] for r in rows if r["amplification"] is not None]
        if not amps:
            continue
        ci = evaluate.bootstrap_ci(
            amps, resamples=config.bootstrap_resamples, seed=config.master_seed
        )
        for r in rows:
            r["amplification_ci_low"], r["amplification_ci_high"] = ci


# ---------------------------------------------------------------------------
# Report emission


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def emit_reports(out_dir: str | Path) -> list[Path]:
    """Write per-figure CSV extracts from the raw results of a completed run."""
    out_dir = Path(out_dir)
    raw_path = out_dir / "raw" / "results.json"
    if not raw_path.exists():
        raise FileNotFoundError(f"missing run artifact: {raw_path}")
    results = json.loads(raw_path.read_text(encoding="utf-8"))
    reports_dir = out_dir / "reports"
    reports_dir.mkdir(exist_ok=True)
    written: list[Path] = []

    def emit(name: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
        path = reports_dir / name
        _write_csv(path, header, rows)
        written.append(path)

    amp_rows = []
    metric_rows = []
    for row in sorted(results, key=lambda r: (r["strategy"], r["alpha"], r["fold"])):
        if row["strategy"] != "none":
            amp_rows.append(
                [
                    row["strategy"],
                    row["alpha"],
                    row["fold"],
                    row["s_alpha"],
                    row["amplification"],
                    row.get("amplification_ci_low"),
                    row.get("amplification_ci_high"),
                ]
            )
        for variant, m in sorted(row.get("metrics", {}).items()):
            metric_rows.append(
                [
                    row["strategy"],
                    row["alpha"],
                    row["fold"],
                    variant,
                    m["ndcg"],
                    m["r_precision"],
                    m["clicks"],
                    m["n_seeds"],
                ]
            )
    emit("amplification.csv", ["strategy", "alpha", "fold", "S", "Amp", "ci_low", "ci_high"], amp_rows)
    emit(
        "metrics.csv",
        ["strategy", "alpha", "fold", "variant", "ndcg", "r_precision", "clicks", "n_seeds"],
        metric_rows,
    )

    for row in results:
        if row["strategy"] == "none":
            continue
        tag = f"{row['strategy']}__{row['alpha']}__fold{row['fold']}"
        if "teaser" in row:
            emit(
                f"teaser__{tag}.csv",
                ["song", "train_count", "test_rec_count", "is_target"],
                [
                    [t["song"], t["train_count"], t["test_rec_count"], t["is_target"]]
                    for t in row["teaser"]
                ],
            )
        if "externality" in row:
            emit(
                f"externality_bins__{tag}.csv",
                ["bin", "log10_freq_lo", "log10_freq_hi", "n_songs", "mean_delta", "ci_low", "ci_high"],
                [
                    [
                        b["bin"],
                        b["log10_freq_lo"],
                        b["log10_freq_hi"],
                        b["n_songs"],
                        b["mean_delta"],
                        b["ci_low"],
                        b["ci_high"],
                    ]
                    for b in row["externality"]["bins"]
                ],
            )
            emit(
                f"externality_groups__{tag}.csv",
                ["group", "n_songs", "total_delta", "mean_delta", "ci_low", "ci_high"],
                [
                    [g, v["n_songs"], v["total_delta"], v["mean_delta"], v["ci_low"], v["ci_high"]]
                    for g, v in sorted(row["externality"]["groups"].items())
                ],
            )
        if "anchor_scatter" in row:
            emit(
                f"anchor_scatter__{tag}.csv",
                ["anchor", "kind", "times_targeted", "estimated", "true"],
                [
                    [a["anchor"], a["kind"], a["times_targeted"], a["estimated"], a["true"]]
                    for a in row["anchor_scatter"]
                ],
            )
        if "participant" in row and row["participant"]["clean"] is not None:
            p = row["participant"]
            emit(
                f"participant__{tag}.csv",
                [
                    "n_participants",
                    "n_empty_seed",
                    "n_empty_truth",
                    "clean_ndcg",
                    "clean_r_precision",
                    "clean_clicks",
                    "manip_ndcg",
                    "manip_r_precision",
                    "manip_clicks",
                    "mean_overlap",
                ],
                [
                    [
                        p["n_participants"],
                        p["n_empty_seed"],
                        p["n_empty_truth"],
                        p["clean"]["ndcg"],
                        p["clean"]["r_precision"],
                        p["clean"]["clicks"],
                        p["manipulated"]["ndcg"],
                        p["manipulated"]["r_precision"],
                        p["manipulated"]["clicks"],
                        p["mean_overlap"],
                    ]
                ],
            )

    for ineq_path in sorted((out_dir / "raw").glob("inequality_fold*.json")):
        data = json.loads(ineq_path.read_text(encoding="utf-8"))
        fold = data["fold"]
        rows = []
        for level in ("track", "artist"):
            rows.extend([level, x, y] for x, y in data[level]["lorenz"])
        emit(f"lorenz__fold{fold}.csv", ["level", "x", "y"], rows)

    return written
