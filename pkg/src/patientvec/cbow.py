"""CBOW with negative sampling over per-patient CUI sequences.

Used to pretrain the concept embeddings that can initialise the averaging
network. Context windows never cross patient boundaries, and there is no
frequency subsampling.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import kernels
from .numeric import Rng

log = logging.getLogger(__name__)


@dataclass
class CbowConfig:
    window: int = 5
    dim: int = 300
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    min_learning_rate: float = 1e-4
    unigram_power: float = 0.75
    seed: int = 0

    def __post_init__(self):
        if self.window < 1 or self.dim < 1 or self.negatives < 1:
            raise ValueError("window, dim and negatives must all be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class CbowModel:
    syn0: np.ndarray   # input embeddings, |V| x dim
    syn1: np.ndarray   # output embeddings, |V| x dim
    epoch_losses: list = field(default_factory=list)

    @property
    def embeddings(self) -> np.ndarray:
        return self.syn0


def build_pairs(sequences, window: int):
    """Yield ``(context indices, target)`` for every position with a non-empty context."""
    for seq in sequences:
        n = len(seq)
        for t in range(n):
            ctx = [seq[c] for c in range(max(0, t - window), min(n, t + window + 1)) if c != t]
            if ctx:
                yield ctx, seq[t]


def cbow_loss(syn0, syn1, ctx, target, negs) -> float:
    h = syn0[list(ctx)].mean(axis=0)
    f = syn1[[target] + list(negs)] @ h
    signs = np.r_[-1.0, np.ones(len(negs))]
    return float(np.sum(np.logaddexp(0.0, signs * f)))


def cbow_grads(syn0, syn1, ctx, target, negs):
    """Loss gradients as dense arrays shaped like ``syn0`` and ``syn1``."""
    ctx = list(ctx)
    outs = [target] + list(negs)
    h = syn0[ctx].mean(axis=0)
    f = syn1[outs] @ h
    labels = np.r_[1.0, np.zeros(len(negs))]
    dfs = expit(f) - labels
    g0 = np.zeros_like(syn0)
    g1 = np.zeros_like(syn1)
    np.add.at(g1, outs, dfs[:, None] * h[None, :])
    dh = dfs @ syn1[outs]
    np.add.at(g0, ctx, np.tile(dh / len(ctx), (len(ctx), 1)))
    return g0, g1


def cbow_step(model: CbowModel, ctx, target: int, negs, lr: float) -> float:
    """One SGD step on a single (context, target) pair; returns the loss before the step."""
    if target in set(negs):
        raise ValueError("negatives must not contain the target")
    loss = cbow_loss(model.syn0, model.syn1, ctx, target, negs)
    g0, g1 = cbow_grads(model.syn0, model.syn1, ctx, target, negs)
    model.syn0 -= lr * g0
    model.syn1 -= lr * g1
    return loss


def init_model(n_vocab: int, cfg: CbowConfig) -> CbowModel:
    rng = Rng(cfg.seed).child("cbow-init")
    syn0 = rng.uniform(-0.5 / cfg.dim, 0.5 / cfg.dim, size=(n_vocab, cfg.dim))
    return CbowModel(np.ascontiguousarray(syn0), np.zeros((n_vocab, cfg.dim)))


def unigram_table(tokens: np.ndarray, n_vocab: int, power: float) -> np.ndarray:
    counts = np.bincount(tokens, minlength=n_vocab).astype(np.float64)
    w = counts ** power
    return w / w.sum()


def draw_negatives(tokens: np.ndarray, probs: np.ndarray, k: int, rng: Rng) -> np.ndarray:
    """``len(tokens) x k`` negatives; any draw equal to the row's target is redrawn."""
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    negs = np.searchsorted(cdf, rng.random((len(tokens), k)), side="right").astype(np.int64)
    bad = negs == tokens[:, None]
    while bad.any():
        negs[bad] = np.searchsorted(cdf, rng.random(int(bad.sum())), side="right")
        bad = negs == tokens[:, None]
    return negs


def train_cbow(sequences, n_vocab: int, cfg: CbowConfig | None = None) -> CbowModel:
    """Train on token-index sequences (one per patient, document order).

    The learning rate decays linearly from ``learning_rate`` to
    ``min_learning_rate`` over all positions of all epochs.
    """
    cfg = cfg or CbowConfig()
    if n_vocab < 1:
        raise ValueError("vocabulary is empty")
    seqs = [np.asarray(s, dtype=np.int64) for s in sequences]
    if not seqs:
        raise ValueError("no sequences to train on")
    model = init_model(n_vocab, cfg)
    if cfg.epochs == 0:
        return model

    tokens = np.ascontiguousarray(np.concatenate(seqs), dtype=np.int64)
    offsets = np.zeros(len(seqs) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(s) for s in seqs])
    probs = unigram_table(tokens, n_vocab, cfg.unigram_power)
    if np.count_nonzero(probs) < 2:
        raise ValueError("negative sampling needs at least two distinct tokens")
    total = cfg.epochs * len(tokens)
    rng = Rng(cfg.seed).child("cbow-train")
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(seqs))
        negs = draw_negatives(tokens, probs, cfg.negatives, rng)
        loss_sum, n_pairs = kernels.cbow_epoch(
            tokens, offsets, order, cfg.window, negs, model.syn0, model.syn1,
            cfg.learning_rate, cfg.min_learning_rate, epoch * len(tokens), total)
        mean = loss_sum / max(n_pairs, 1)
        model.epoch_losses.append(mean)
        log.info("cbow epoch %d: mean loss %.6f over %d pairs", epoch + 1, mean, n_pairs)
    return model


def save_text(path, tokens, embeddings: np.ndarray) -> None:
    """Write ``token v1 v2 ...`` one row per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for tok, row in zip(tokens, embeddings):
            fh.write(tok + " " + " ".join(repr(float(v)) for v in row) + "\n")


def load_text(path):
    tokens, rows = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if parts:
                tokens.append(parts[0])
                rows.append([float(v) for v in parts[1:]])
    return tokens, np.asarray(rows, dtype=np.float64)
