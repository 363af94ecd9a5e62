"""Deep averaging network for multi-label billing-code prediction.

Architecture: mean of the patient's unique CUI embeddings -> dense hidden
layer (rectifier by default) -> one sigmoid unit per billing code. Trained
with binary cross-entropy (mean over codes and batch) and RMSProp. The hidden
activations of the frozen network are the patient vectors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from . import kernels
from .numeric import Rng, csr_from_rows

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-12
PARAMS = ("E", "W1", "b1", "W2", "b2")


@dataclass
class DanConfig:
    embed_dim: int = 300
    hidden_dim: int = 1000
    learning_rate: float = 0.001
    epochs: int = 75
    batch_size: int = 50
    rmsprop_decay: float = 0.9
    rmsprop_epsilon: float = 1e-8
    sigmoid_threshold: float = 0.5
    hidden_activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        if min(self.embed_dim, self.hidden_dim, self.batch_size) < 1:
            raise ValueError("dimensions and batch_size must be >= 1")
        if not 0 < self.sigmoid_threshold < 1:
            raise ValueError("sigmoid_threshold must lie in (0, 1)")
        if not 0 < self.rmsprop_decay < 1:
            raise ValueError("rmsprop_decay must lie in (0, 1)")
        if self.hidden_activation not in ("relu", "tanh"):
            raise ValueError("hidden_activation must be 'relu' or 'tanh'")


@dataclass
class DanModel:
    E: np.ndarray
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    activation: str = "relu"
    cache: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in PARAMS:
            self.cache.setdefault(name, np.zeros_like(getattr(self, name)))

    @property
    def n_codes(self) -> int:
        return self.W2.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[1]

    def copy(self) -> "DanModel":
        return DanModel(*(getattr(self, n).copy() for n in PARAMS), activation=self.activation,
                        cache={k: v.copy() for k, v in self.cache.items()})

    def arrays(self) -> dict:
        out = {n: getattr(self, n) for n in PARAMS}
        out.update({"cache_" + n: self.cache[n] for n in PARAMS})
        return out

    @classmethod
    def from_arrays(cls, arrays: dict, activation: str = "relu") -> "DanModel":
        cache = {n: arrays["cache_" + n] for n in PARAMS if "cache_" + n in arrays}
        return cls(*(arrays[n] for n in PARAMS), activation=activation, cache=cache)


@dataclass
class Gradients:
    E_rows: np.ndarray   # row indices of E that received gradient
    E: np.ndarray        # len(E_rows) x embed_dim
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray


def init_model(n_cuis: int, n_codes: int, cfg: DanConfig, embeddings=None) -> DanModel:
    rng = Rng(cfg.seed).child("dan-init")
    d, h = cfg.embed_dim, cfg.hidden_dim
    if embeddings is None:
        E = rng.uniform(-0.5 / d, 0.5 / d, size=(n_cuis, d))
    else:
        E = np.array(embeddings, dtype=np.float64)
        if E.shape != (n_cuis, d):
            raise ValueError(f"pretrained embeddings have shape {E.shape}, expected {(n_cuis, d)}")
    W1 = rng.uniform(-1.0, 1.0, size=(d, h)) / np.sqrt(d)
    W2 = rng.uniform(-1.0, 1.0, size=(h, n_codes)) / np.sqrt(h)
    return DanModel(np.ascontiguousarray(E), W1, np.zeros(h), W2, np.zeros(n_codes),
                    activation=cfg.hidden_activation)


_warned_empty = False


def averaging_matrix(batch, n_cuis: int) -> sp.csr_matrix:
    """Rows average the listed CUIs (duplicates collapsed); an empty list gives a zero row."""
    global _warned_empty
    rows, vals = [], []
    for idx in batch:
        u = np.unique(np.asarray(idx, dtype=np.int64))
        if len(u) == 0 and not _warned_empty:
            log.warning("patient with no in-vocabulary CUIs: using a zero input vector")
            _warned_empty = True
        rows.append(u)
        vals.append(np.full(len(u), 1.0 / max(len(u), 1)))
    return csr_from_rows(rows, vals, n_cols=n_cuis)


def _act(z, kind):
    return np.maximum(z, 0.0) if kind == "relu" else np.tanh(z)


def _act_grad(z, a, kind):
    return (z > 0).astype(np.float64) if kind == "relu" else 1.0 - a * a


def forward_batch(model: DanModel, A: sp.csr_matrix):
    a = A @ model.E
    z1 = a @ model.W1 + model.b1
    h = _act(z1, model.activation)
    p = expit(h @ model.W2 + model.b2)
    return a, z1, h, p


def forward(model: DanModel, indices):
    """Hidden vector and output probabilities for one patient's CUI indices."""
    _, _, h, p = forward_batch(model, averaging_matrix([indices], model.E.shape[0]))
    return h[0], p[0]


def loss(p, y) -> float:
    """Binary cross-entropy averaged over all entries, probabilities clamped to [1e-12, 1-1e-12]."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {y.shape}")
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(np.mean(-(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))))


def backward(model: DanModel, batch, Y):
    """Gradients of the mean batch loss; returns ``(Gradients, loss)``.

    ``batch`` is a list of CUI index lists or a precomputed averaging matrix.
    """
    Y = np.asarray(Y, dtype=np.float64)
    n = batch.shape[0] if sp.issparse(batch) else len(batch)
    if n == 0:
        raise ValueError("empty batch")
    A = batch if sp.issparse(batch) else averaging_matrix(batch, model.E.shape[0])
    a, z1, h, p = forward_batch(model, A)
    value = loss(p, Y)
    dz2 = (p - Y) / Y.size
    gW2 = h.T @ dz2
    gb2 = dz2.sum(axis=0)
    dz1 = (dz2 @ model.W2.T) * _act_grad(z1, h, model.activation)
    gW1 = a.T @ dz1
    gb1 = dz1.sum(axis=0)
    da = dz1 @ model.W1.T
    rows = np.unique(A.indices).astype(np.int64)
    gE = np.asarray(A.T @ da)[rows]
    return Gradients(rows, gE, gW1, gb1, gW2, gb2), value


def rmsprop_step(model: DanModel, grads: Gradients, cfg: DanConfig) -> None:
    """In-place RMSProp update; only the touched rows of E (and their caches) change."""
    rho, lr, eps = cfg.rmsprop_decay, cfg.learning_rate, cfg.rmsprop_epsilon
    for name in ("W1", "b1", "W2", "b2"):
        g = np.ascontiguousarray(getattr(grads, name), dtype=np.float64)
        theta = getattr(model, name)
        if g.shape != theta.shape:
            raise ValueError(f"gradient shape {g.shape} does not match {name} {theta.shape}")
        kernels.rmsprop_dense(theta.reshape(-1), g.reshape(-1), model.cache[name].reshape(-1), lr, rho, eps)
    kernels.rmsprop_rows(model.E, np.ascontiguousarray(grads.E_rows, dtype=np.int64),
                         np.ascontiguousarray(grads.E, dtype=np.float64), model.cache["E"], lr, rho, eps)


def predict_proba(model: DanModel, batch) -> np.ndarray:
    return forward_batch(model, averaging_matrix(batch, model.E.shape[0]))[3]


def predict_codes(model: DanModel, batch, threshold: float = 0.5) -> np.ndarray:
    """Binary code predictions: 1 where the probability is >= threshold."""
    return (predict_proba(model, batch) >= threshold).astype(np.int64)


def harvest(model: DanModel, batch) -> np.ndarray:
    """Post-activation hidden layer for each patient (rows); the model is not modified."""
    return forward_batch(model, averaging_matrix(batch, model.E.shape[0]))[2]


def train(dataset, cfg: DanConfig | None = None, embeddings=None, retrain: bool = False,
          model: DanModel | None = None):
    """Train on the dataset's train split (or train+validation when ``retrain``).

    Returns ``(model, log)``; ``log`` has one dict per epoch with keys
    ``epoch``, ``mean_train_loss`` and ``val_macro_f1`` (``None`` without a
    validation split).
    """
    from .eval import multilabel_macro_f1

    cfg = cfg or DanConfig()
    train_p = dataset.subset(None) if retrain else dataset.subset("train")
    val_p = [] if retrain else dataset.subset("validation")
    if not train_p:
        raise ValueError("empty training split")
    if model is None:
        model = init_model(dataset.n_cuis, dataset.n_codes, cfg, embeddings)
    Atr = averaging_matrix([p.cuis for p in train_p], dataset.n_cuis)
    Ytr = dataset.targets(train_p)
    Xva = [p.cuis for p in val_p]
    Yva = dataset.targets(val_p) if val_p else None

    rng = Rng(cfg.seed).child("dan-shuffle")
    history = []
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(len(train_p))
        total = 0.0
        for s in range(0, len(perm), cfg.batch_size):
            idx = perm[s:s + cfg.batch_size]
            grads, value = backward(model, Atr[idx], Ytr[idx])
            rmsprop_step(model, grads, cfg)
            total += value * len(idx)
        entry = {"epoch": epoch, "mean_train_loss": total / len(perm), "val_macro_f1": None}
        if Yva is not None:
            entry["val_macro_f1"] = multilabel_macro_f1(Yva, predict_codes(model, Xva, cfg.sigmoid_threshold))
        history.append(entry)
        log.info("dan epoch %d: loss %.6f val macro-F1 %s", epoch, entry["mean_train_loss"], entry["val_macro_f1"])
    return model, history
