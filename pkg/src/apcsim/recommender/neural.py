"""Trainable embedding + attention recommender.

Each song gets an embedding; a playlist is aggregated by adding positional
embeddings over its last ``window`` songs, one block of multi-head
self-attention plus a feed-forward layer, and reading out the representation
at the final position (order-sensitive by construction). Similarity between a
seed and a candidate is the inner product of the aggregated seed vector and
the candidate's embedding. Training minimizes a sampled-softmax contrastive
loss over (context prefix, next song) pairs with uniform negatives.

Training is deterministic given the config seed up to floating-point
reduction order (single-process CPU is reproducible in practice).
"""

from __future__ import annotations

import copy
import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from ..corpus import Corpus, SongId
from ..errors import ConfigError
from . import Recommendation, rank_top_k

CHECKPOINT_VERSION = 1


@dataclass
class NeuralConfig:
    dim: int = 64
    heads: int = 2
    layers: int = 1
    window: int = 50
    dropout: float = 0.0
    lr: float = 1e-3
    weight_decay: float = 0.0
    epochs: int = 5
    batch_size: int = 256
    negatives: int = 100
    pairs_per_playlist: int = 4
    early_stop: bool = False
    patience: int = 2
    seed: int = 0

    def validate(self) -> None:
        if self.dim < 1 or self.heads < 1 or self.layers < 1 or self.window < 1:
            raise ConfigError("dim, heads, layers, window must be >= 1")
        if self.dim % self.heads != 0:
            raise ConfigError("dim must be divisible by heads")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError("dropout must be in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1 or self.negatives < 1:
            raise ConfigError("epochs, batch_size, negatives must be >= 1")


class _AttentionBlock(nn.Module):
    def __init__(self, dim: int, heads: int, dropout: float):
        super().__init__()
        self.attn = nn.MultiheadAttention(dim, heads, dropout=dropout, batch_first=True)
        self.ln1 = nn.LayerNorm(dim)
        self.ln2 = nn.LayerNorm(dim)
        self.ff = nn.Sequential(nn.Linear(dim, 2 * dim), nn.GELU(), nn.Linear(2 * dim, dim))

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        attn_out, _ = self.attn(x, x, x, key_padding_mask=pad_mask, need_weights=False)
        x = self.ln1(x + attn_out)
        return self.ln2(x + self.ff(x))


class NeuralModel(nn.Module):
    """Song embeddings plus a sequence-aware aggregator."""

    def __init__(self, vocab: Sequence[SongId], config: NeuralConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.vocab: list[SongId] = list(vocab)
        self.index: dict[SongId, int] = {s: i for i, s in enumerate(self.vocab)}
        v = len(self.vocab)
        self.pad_index = v
        self.embedding = nn.Embedding(v + 1, config.dim, padding_idx=v)
        self.positions = nn.Parameter(torch.zeros(config.window, config.dim))
        self.blocks = nn.ModuleList(
            _AttentionBlock(config.dim, config.heads, config.dropout) for _ in range(config.layers)
        )
        self._reset_parameters()

    def _reset_parameters(self) -> None:
        bound = 0.5 / self.config.dim
        nn.init.uniform_(self.embedding.weight, -bound, bound)
        with torch.no_grad():
            self.embedding.weight[self.pad_index].zero_()
        nn.init.normal_(self.positions, std=0.02)

    def aggregate(self, contexts: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        """Playlist embeddings for a padded batch of song-index contexts.

        contexts: (B, T) long tensor padded with pad_index; lengths: (B,).
        Rows with length 0 map to the zero vector.
        """
        b, t = contexts.shape
        pad_mask = contexts == self.pad_index
        x = self.embedding(contexts) + self.positions[:t].unsqueeze(0)
        safe_mask = pad_mask.clone()
        empty = lengths == 0
        if bool(empty.any()):
            # All-pad rows would make attention NaN; unmask their first slot
            # and zero the result afterwards.
            safe_mask[empty, 0] = False
        for block in self.blocks:
            x = block(x, safe_mask)
        last = (lengths - 1).clamp(min=0)
        out = x[torch.arange(b), last]
        return out * (lengths > 0).unsqueeze(1).to(out.dtype)

    def _context_tensor(self, seeds: Sequence[Sequence[SongId]]) -> tuple[torch.Tensor, torch.Tensor]:
        """Map seeds to padded index tensors, dropping out-of-vocabulary songs."""
        w = self.config.window
        rows = [[self.index[s] for s in seed if s in self.index][-w:] for seed in seeds]
        t = max((len(r) for r in rows), default=1) or 1
        contexts = torch.full((len(rows), t), self.pad_index, dtype=torch.long)
        lengths = torch.zeros(len(rows), dtype=torch.long)
        for i, r in enumerate(rows):
            if r:
                contexts[i, : len(r)] = torch.tensor(r, dtype=torch.long)
                lengths[i] = len(r)
        return contexts, lengths

    @torch.no_grad()
    def score_all_batch(self, seeds: Sequence[Sequence[SongId]]) -> np.ndarray:
        """(B, V) similarity matrix for a batch of seeds."""
        self.eval()
        contexts, lengths = self._context_tensor(seeds)
        h = self.aggregate(contexts, lengths)
        scores = h @ self.embedding.weight[: len(self.vocab)].T
        return scores.cpu().numpy().astype(float)

    def score_all(self, seed: Sequence[SongId]) -> np.ndarray:
        return self.score_all_batch([seed])[0]

    def similarity(self, candidate: SongId, seed: Sequence[SongId]) -> float:
        if candidate not in self.index:
            raise ValueError(f"candidate {candidate!r} not in vocabulary")
        return float(self.score_all(seed)[self.index[candidate]])

    def recommend(self, seed: Sequence[SongId], k: int) -> Recommendation:
        return rank_top_k(self.vocab, self.score_all(seed), seed, k, index=self.index)

    def save(self, path: str | Path) -> None:
        torch.save(
            {
                "version": CHECKPOINT_VERSION,
                "kind": "neural",
                "config": vars(self.config),
                "vocab": self.vocab,
                "state_dict": self.state_dict(),
            },
            path,
        )

    @classmethod
    def load(cls, path: str | Path) -> "NeuralModel":
        payload = torch.load(path, map_location="cpu", weights_only=False)
        if payload.get("kind") != "neural":
            raise ValueError(f"{path} is not a neural checkpoint")
        model = cls(payload["vocab"], NeuralConfig(**payload["config"]))
        model.load_state_dict(payload["state_dict"])
        model.eval()
        return model


def _pairs_from_corpus(
    corpus: Corpus,
    index: dict[SongId, int],
    window: int,
    pairs_per_playlist: int,
    rng: np.random.Generator,
) -> list[tuple[list[int], int]]:
    """Sample (context prefix, next song) training pairs."""
    pairs = []
    for p in corpus.playlists:
        idx = [index[s] for s in p.tracks if s in index]
        if len(idx) < 2:
            continue
        for t in rng.integers(1, len(idx), size=pairs_per_playlist):
            t = int(t)
            pairs.append((idx[max(0, t - window) : t], idx[t]))
    return pairs


def _batch_loss(
    model: NeuralModel,
    contexts: torch.Tensor,
    lengths: torch.Tensor,
    targets: torch.Tensor,
    negatives: torch.Tensor,
) -> torch.Tensor:
    """Sampled-softmax contrastive loss; the positive sits at logit column 0."""
    h = model.aggregate(contexts, lengths)
    candidates = torch.cat([targets.unsqueeze(1), negatives], dim=1)
    cand_emb = model.embedding(candidates)
    logits = torch.einsum("bd,bnd->bn", h, cand_emb)
    return nn.functional.cross_entropy(logits, torch.zeros(len(targets), dtype=torch.long))


def _collate(pairs: Sequence[tuple[list[int], int]], pad_index: int) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    t = max(len(c) for c, _ in pairs)
    contexts = torch.full((len(pairs), t), pad_index, dtype=torch.long)
    lengths = torch.zeros(len(pairs), dtype=torch.long)
    targets = torch.zeros(len(pairs), dtype=torch.long)
    for i, (c, y) in enumerate(pairs):
        contexts[i, : len(c)] = torch.tensor(c, dtype=torch.long)
        lengths[i] = len(c)
        targets[i] = y
    return contexts, lengths, targets


def _draw_negatives(
    pool: torch.Tensor, targets: torch.Tensor, n: int, gen: torch.Generator
) -> torch.Tensor:
    """Uniform negatives from the trainable pool, avoiding the positive."""
    negs = pool[torch.randint(len(pool), (len(targets), n), generator=gen)]
    collision = negs == targets.unsqueeze(1)
    if bool(collision.any()):
        redraw = pool[torch.randint(len(pool), (int(collision.sum()),), generator=gen)]
        negs[collision] = redraw
    return negs


def train_neural(
    train_corpus: Corpus,
    config: NeuralConfig | None = None,
    val_corpus: Corpus | None = None,
    extra_songs: Sequence[SongId] = (),
    log_path: str | Path | None = None,
) -> NeuralModel:
    """Train the embedding + attention model on (prefix, next song) pairs.

    The vocabulary is the train corpus plus ``extra_songs`` (sorted by id).
    Negatives are drawn only from songs that occur in the training data, so a
    target song present merely as an extra vocabulary entry keeps its random
    initial embedding (zero training signal).
    """
    config = config or NeuralConfig()
    config.validate()
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    gen = torch.Generator().manual_seed(config.seed)

    train_songs = train_corpus.songs()
    vocab = sorted(train_songs | set(extra_songs))
    model = NeuralModel(vocab, config)
    trainable_pool = torch.tensor(
        sorted(model.index[s] for s in train_songs), dtype=torch.long
    )

    val_batches = None
    if val_corpus is not None:
        val_pairs = _pairs_from_corpus(val_corpus, model.index, config.window, config.pairs_per_playlist, rng)
        if val_pairs:
            val_batches = []
            for i in range(0, len(val_pairs), config.batch_size):
                chunk = val_pairs[i : i + config.batch_size]
                contexts, lengths, targets = _collate(chunk, model.pad_index)
                negs = _draw_negatives(trainable_pool, targets, config.negatives, gen)
                val_batches.append((contexts, lengths, targets, negs))

    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    history = []
    best_val = math.inf
    best_state = None
    bad_epochs = 0

    for epoch in range(config.epochs):
        started = time.perf_counter()
        model.train()
        pairs = _pairs_from_corpus(train_corpus, model.index, config.window, config.pairs_per_playlist, rng)
        order = torch.randperm(len(pairs), generator=gen).tolist()
        total_loss = 0.0
        n_batches = 0
        for i in range(0, len(order), config.batch_size):
            chunk = [pairs[j] for j in order[i : i + config.batch_size]]
            contexts, lengths, targets = _collate(chunk, model.pad_index)
            negatives = _draw_negatives(trainable_pool, targets, config.negatives, gen)
            loss = _batch_loss(model, contexts, lengths, targets, negatives)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"training diverged at epoch {epoch}: loss={loss.item()!r}, lr={config.lr}"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total_loss += float(loss.item())
            n_batches += 1
        train_loss = total_loss / max(n_batches, 1)

        val_loss = math.nan
        if val_batches is not None:
            model.eval()
            with torch.no_grad():
                val_loss = float(
                    np.mean([float(_batch_loss(model, *batch).item()) for batch in val_batches])
                )
            if config.early_stop:
                if val_loss < best_val - 1e-6:
                    best_val = val_loss
                    best_state = copy.deepcopy(model.state_dict())
                    bad_epochs = 0
                else:
                    bad_epochs += 1

        history.append((epoch, train_loss, val_loss, time.perf_counter() - started))
        if config.early_stop and val_batches is not None and bad_epochs > config.patience:
            break

    if best_state is not None:
        model.load_state_dict(best_state)

    if log_path is not None:
        with open(log_path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "train_loss", "val_loss", "seconds"])
            writer.writerows(history)

    model.eval()
    return model


def validation_loss(model: NeuralModel, corpus: Corpus, seed: int = 0) -> float:
    """Mean sampled-softmax loss on a corpus with frozen sampling, no updates."""
    rng = np.random.default_rng(seed)
    gen = torch.Generator().manual_seed(seed)
    pairs = _pairs_from_corpus(corpus, model.index, model.config.window, model.config.pairs_per_playlist, rng)
    if not pairs:
        raise ValueError("no evaluable pairs in corpus")
    pool = torch.arange(len(model.vocab), dtype=torch.long)
    losses = []
    model.eval()
    with torch.no_grad():
        for i in range(0, len(pairs), model.config.batch_size):
            chunk = pairs[i : i + model.config.batch_size]
            contexts, lengths, targets = _collate(chunk, model.pad_index)
            negs = _draw_negatives(pool, targets, model.config.negatives, gen)
            losses.append(float(_batch_loss(model, contexts, lengths, targets, negs).item()))
    return float(np.mean(losses))


def grad_check(
    model: NeuralModel,
    batch: Sequence[tuple[list[int], int]],
    epsilon: float = 1e-5,
    n_params: int = 20,
    seed: int = 0,
) -> float:
    """Max relative error between autograd and central finite differences.

    Runs on a double-precision copy of the model over a fixed batch with fixed
    negatives; samples ``n_params`` random scalar parameters.
    """
    probe = copy.deepcopy(model).double()
    probe.train()  # keep any dropout off via config; train mode for grads
    if probe.config.dropout != 0.0:
        raise ValueError("grad_check requires dropout=0 for a deterministic loss")
    gen = torch.Generator().manual_seed(seed)
    contexts, lengths, targets = _collate(batch, probe.pad_index)
    pool = torch.arange(len(probe.vocab), dtype=torch.long)
    negatives = _draw_negatives(pool, targets, probe.config.negatives, gen)

    def loss_fn() -> torch.Tensor:
        return _batch_loss(probe, contexts, lengths, targets, negatives)

    loss = loss_fn()
    if not torch.isfinite(loss):
        raise RuntimeError("non-finite loss in grad_check")
    probe.zero_grad()
    loss.backward()

    params = [p for p in probe.parameters() if p.requires_grad and p.grad is not None]
    rng = np.random.default_rng(seed)
    max_rel = 0.0
    for _ in range(n_params):
        p = params[int(rng.integers(len(params)))]
        flat = int(rng.integers(p.numel()))
        analytic = float(p.grad.view(-1)[flat])
        with torch.no_grad():
            original = float(p.view(-1)[flat])
            p.view(-1)[flat] = original + epsilon
            up = float(loss_fn())
            p.view(-1)[flat] = original - epsilon
            down = float(loss_fn())
            p.view(-1)[flat] = original
        numeric = (up - down) / (2.0 * epsilon)
        denom = max(abs(analytic), abs(numeric), 1e-8)
        max_rel = max(max_rel, abs(analytic - numeric) / denom)
    return max_rel
