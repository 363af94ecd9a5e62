"""Linear SVM (L2-regularised hinge loss) by dual coordinate descent.

Solves ``min 1/2 |w|^2 + C sum_i max(0, 1 - y_i (w.x_i + b))`` with the bias
folded in as a weight on a constant-1 feature (so it is regularised too).
The dual ``max sum(alpha) - 1/2 |sum_i alpha_i y_i x_i|^2, 0 <= alpha <= C``
is maximised one coordinate at a time, each coordinate solved exactly, in a
seeded random order per sweep.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .numeric import Rng

log = logging.getLogger(__name__)


@dataclass
class SvmConfig:
    C: float = 1.0
    tolerance: float = 1e-4
    max_sweeps: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError("C must be > 0")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")


@dataclass
class BinarySvm:
    w: np.ndarray
    b: float
    constant: bool = False          # single-class input: decision is the sign of b
    dual_objective: list = field(default_factory=list)
    alpha: np.ndarray | None = None
    converged: bool = False

    def decision(self, X) -> np.ndarray:
        return np.asarray(X @ self.w).ravel() + self.b


def _as_csr(X) -> sp.csr_matrix:
    X = sp.csr_matrix(X, dtype=np.float64)
    X.sum_duplicates()
    X.sort_indices()
    return X


def dual_value(alpha, w_aug) -> float:
    return float(np.sum(alpha) - 0.5 * np.dot(w_aug, w_aug))


def train_binary(X, y, cfg: SvmConfig | None = None) -> BinarySvm:
    """Fit a binary linear SVM; ``y`` holds -1/+1 labels.

    ``dual_objective`` records the dual value after every sweep, accumulated
    from the exact per-coordinate gains.
    """
    cfg = cfg or SvmConfig()
    X = _as_csr(X)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    if n == 0:
        raise ValueError("empty dataset")
    if len(y) != n:
        raise ValueError("labels and features disagree in length")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if not np.all(np.isfinite(X.data)):
        raise ValueError("features must be finite")
    if np.all(y == y[0]):
        return BinarySvm(np.zeros(d), float(y[0]), constant=True, converged=True)

    indptr = X.indptr.astype(np.int64)
    indices = X.indices.astype(np.int64)
    data = np.ascontiguousarray(X.data)
    qdiag = np.asarray(X.multiply(X).sum(axis=1)).ravel() + 1.0
    alpha = np.zeros(n)
    w = np.zeros(d + 1)
    rng = Rng(cfg.seed).child("svm-order")
    dual = 0.0
    history = []
    converged = False
    for sweep in range(cfg.max_sweeps):
        viol, gain = kernels.svm_dcd_sweep(indptr, indices, data, y, alpha, w, qdiag,
                                           float(cfg.C), rng.permutation(n))
        dual += gain
        history.append(dual)
        if viol <= cfg.tolerance:
            converged = True
            break
    if not converged:
        log.warning("svm did not reach tolerance %g in %d sweeps", cfg.tolerance, cfg.max_sweeps)
    return BinarySvm(w[:d].copy(), float(w[d]), dual_objective=history, alpha=alpha, converged=converged)


def primal_value(model: BinarySvm, X, y, C: float) -> float:
    margins = np.asarray(y) * model.decision(_as_csr(X))
    return float(0.5 * (model.w @ model.w + model.b ** 2) + C * np.maximum(0.0, 1.0 - margins).sum())


@dataclass
class OneVsAllModel:
    classes: list
    W: np.ndarray        # n_classes x n_features
    b: np.ndarray        # n_classes
    present: np.ndarray  # False for classes with no training examples

    def decision(self, X) -> np.ndarray:
        X = _as_csr(X) if sp.issparse(X) else np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.W.shape[1]:
            raise ValueError(f"dimension mismatch: {X.shape[1]} features, model has {self.W.shape[1]}")
        scores = np.asarray(X @ self.W.T) + self.b
        scores[:, ~self.present] = -np.inf
        return scores


def train_one_vs_all(X, labels, classes, cfg: SvmConfig | None = None, threads: int = 1) -> OneVsAllModel:
    """One binary SVM per class (class vs rest); ``labels`` are class indices into ``classes``."""
    cfg = cfg or SvmConfig()
    X = _as_csr(X)
    labels = np.asarray(labels, dtype=np.int64)
    if X.shape[0] == 0:
        raise ValueError("empty dataset")

    def fit(c):
        seed = int(Rng(cfg.seed).child(f"class-{c}").integers(0, 2**62))
        sub = SvmConfig(cfg.C, cfg.tolerance, cfg.max_sweeps, seed)
        return train_binary(X, np.where(labels == c, 1.0, -1.0), sub)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            models = list(ex.map(fit, range(len(classes))))
    else:
        models = [fit(c) for c in range(len(classes))]
    present = np.array([np.any(labels == c) for c in range(len(classes))])
    W = np.vstack([m.w for m in models])
    b = np.array([m.b for m in models])
    return OneVsAllModel(list(classes), W, b, present)


def predict(model: OneVsAllModel, X) -> np.ndarray:
    """Class index with the largest decision value; ties go to the lowest index."""
    return np.argmax(model.decision(X), axis=1)


def select_c(X, labels, classes, grid=(0.01, 0.1, 1.0, 10.0), folds: int = 3,
             cfg: SvmConfig | None = None) -> float:
    """Pick C from ``grid`` by mean macro-F1 over seeded folds."""
    from .eval import macro_prf

    cfg = cfg or SvmConfig()
    X = _as_csr(X)
    labels = np.asarray(labels, dtype=np.int64)
    perm = Rng(cfg.seed).child("cv-folds").permutation(len(labels))
    parts = np.array_split(perm, folds)
    best, best_score = grid[0], -1.0
    for C in grid:
        scores = []
        for f in range(folds):
            test = parts[f]
            train = np.concatenate([parts[g] for g in range(folds) if g != f])
            m = train_one_vs_all(X[train], labels[train], classes, SvmConfig(C, cfg.tolerance, cfg.max_sweeps, cfg.seed))
            scores.append(macro_prf(labels[test], predict(m, X[test]), range(len(classes))).macro_f1)
        score = float(np.mean(scores))
        if score > best_score:
            best, best_score = C, score
    return best
