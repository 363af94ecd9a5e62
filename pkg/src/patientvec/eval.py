"""Macro-averaged precision/recall/F1, table reporting and the paired t-test.

Per-label metrics are computed in exact rational arithmetic and converted to
float at the end, so hand-computed fixtures compare with ``==``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import betainc


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def precision(self) -> Fraction:
        return Fraction(self.tp, self.tp + self.fp) if self.tp + self.fp else Fraction(0)

    def recall(self) -> Fraction:
        return Fraction(self.tp, self.tp + self.fn) if self.tp + self.fn else Fraction(0)

    def f1(self) -> Fraction:
        # 2PR/(P+R) == 2tp/(2tp+fp+fn) whenever tp > 0; both are 0 otherwise
        return Fraction(2 * self.tp, 2 * self.tp + self.fp + self.fn) if self.tp else Fraction(0)


@dataclass
class EvalReport:
    labels: list
    precision: dict
    recall: dict
    f1: dict
    macro_precision: float
    macro_recall: float
    macro_f1: float
    counts: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "labels": [str(l) for l in self.labels],
            "per_label": {str(l): {"precision": self.precision[l], "recall": self.recall[l], "f1": self.f1[l]}
                          for l in self.labels},
            "macro": {"precision": self.macro_precision, "recall": self.macro_recall, "f1": self.macro_f1},
        }


def confusion(gold, predicted, labels) -> dict:
    gold = list(gold)
    predicted = list(predicted)
    if len(gold) != len(predicted):
        raise ValueError(f"length mismatch: {len(gold)} gold vs {len(predicted)} predicted")
    counts = {l: ConfusionCounts() for l in labels}
    for g, p in zip(gold, predicted):
        if g == p:
            counts[g].tp += 1
        else:
            counts[p].fp += 1
            counts[g].fn += 1
    return counts


def macro_prf(gold, predicted, labels, include_zero_support: bool = True) -> EvalReport:
    """Per-label and macro P/R/F1 for single-label multi-class predictions.

    Macro values are unweighted means over every label in ``labels``
    (labels absent from both gold and predictions count as zeros unless
    ``include_zero_support`` is False).
    """
    labels = list(labels)
    if not labels:
        raise ValueError("empty label set")
    counts = confusion(gold, predicted, labels)
    used = [l for l in labels if include_zero_support or counts[l].tp + counts[l].fn > 0] or labels
    P = {l: counts[l].precision() for l in labels}
    R = {l: counts[l].recall() for l in labels}
    F = {l: counts[l].f1() for l in labels}
    n = len(used)
    return EvalReport(
        labels,
        {l: float(v) for l, v in P.items()},
        {l: float(v) for l, v in R.items()},
        {l: float(v) for l, v in F.items()},
        float(sum(P[l] for l in used) / n),
        float(sum(R[l] for l in used) / n),
        float(sum(F[l] for l in used) / n),
        counts,
    )


def multilabel_macro_f1(gold, pred) -> float:
    """Mean over columns of the binary F1 (positive class = 1)."""
    gold = np.asarray(gold) != 0
    pred = np.asarray(pred) != 0
    if gold.shape != pred.shape:
        raise ValueError(f"shape mismatch: {gold.shape} vs {pred.shape}")
    if gold.ndim != 2 or gold.shape[1] == 0:
        raise ValueError("expected a non-empty 2-D label matrix")
    tp = np.sum(gold & pred, axis=0)
    fp = np.sum(~gold & pred, axis=0)
    fn = np.sum(gold & ~pred, axis=0)
    total = sum((ConfusionCounts(int(a), int(b), int(c)).f1() for a, b, c in zip(tp, fp, fn)), Fraction(0))
    return float(total / gold.shape[1])


def average_over_diseases(values) -> float:
    values = list(values)
    if not values:
        raise ValueError("empty list")
    return math.fsum(values) / len(values)


def t_cdf(t: float, df: float) -> float:
    """Student-t CDF through the regularized incomplete beta function."""
    x = df / (df + t * t)
    tail = 0.5 * betainc(df / 2.0, 0.5, x)
    return 1.0 - tail if t > 0 else tail


def paired_t_test(a, b):
    """Two-tailed paired t-test on ``b - a``; returns ``(t, p, df)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("inputs must be 1-D and of equal length")
    n = len(a)
    if n < 2:
        raise ValueError("need at least two pairs")
    d = b - a
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        raise ValueError("differences have zero variance; t is undefined")
    t = float(np.mean(d)) / (sd / math.sqrt(n))
    df = n - 1
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return t, p, df


def format_table(systems: dict, diseases: list) -> str:
    """Aligned text table: one row per disease, P/R/F1 per system, then an Average row.

    ``systems`` maps system name -> {disease: EvalReport}.
    """
    names = list(systems)
    width = max([len("Disease"), len("Average")] + [len(d) for d in diseases])
    head1 = " " * width + " | " + " | ".join(f"{n:^20}" for n in names)
    head2 = f"{'Disease':<{width}} | " + " | ".join(f"{'P':>6} {'R':>6} {'F1':>6}" for _ in names)
    lines = [head1, head2, "-" * len(head2)]
    for d in diseases:
        cells = []
        for n in names:
            r = systems[n][d]
            cells.append(f"{r.macro_precision:6.3f} {r.macro_recall:6.3f} {r.macro_f1:6.3f}")
        lines.append(f"{d:<{width}} | " + " | ".join(cells))
    lines.append("-" * len(head2))
    cells = []
    for n in names:
        rs = [systems[n][d] for d in diseases]
        cells.append(" ".join(f"{average_over_diseases(getattr(r, k) for r in rs):6.3f}"
                              for k in ("macro_precision", "macro_recall", "macro_f1")))
    lines.append(f"{'Average':<{width}} | " + " | ".join(cells))
    return "\n".join(lines) + "\n"


def report_json(systems: dict, diseases: list, ttest=None) -> str:
    out = {"systems": {}}
    for n, per in systems.items():
        out["systems"][n] = {
            "diseases": {d: per[d].to_json() for d in diseases},
            "average": {k: average_over_diseases(getattr(per[d], "macro_" + k) for d in diseases)
                        for k in ("precision", "recall", "f1")},
        }
    if ttest is not None:
        out["ttest"] = ttest
    return json.dumps(out, sort_keys=True, indent=2) + "\n"
