"""Synthetic corpora with latent factors shared by CUIs, billing codes and phenotypes.

Each patient activates one or two latent factors. CUI tokens come from the
active factors' disjoint vocabulary blocks (plus uniform noise), billing
codes are Bernoulli draws that fire more often when their linked factor is
active, and each disease's phenotype label is a noisy function of the same
factors. Billing codes are therefore informative about phenotypes.

Disease ``d`` is tied to factor ``d % F`` (present) and, jointly with factor
``(d+1) % F``, to the rare "questionable" label.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .corpus import PatientRecord, _canon
from .numeric import Rng

LABELS = ("present", "absent", "questionable")


@dataclass
class SynthConfig:
    num_patients: int = 2000
    vocab_size: int = 500
    num_codes: int = 20
    num_factors: int = 4
    min_cuis: int = 30
    max_cuis: int = 120
    tokens_per_factor: int | None = None
    max_active_factors: int = 2
    noise_rate: float = 0.1
    code_on_prob: float = 0.8
    code_off_prob: float = 0.05
    num_diseases: int = 4
    questionable_prob: float = 0.6
    label_noise: float = 0.02
    id_prefix: str = "p"
    seed: int = 0

    def __post_init__(self):
        if self.tokens_per_factor is None:
            self.tokens_per_factor = self.vocab_size // self.num_factors
        for name in ("noise_rate", "code_on_prob", "code_off_prob", "questionable_prob", "label_noise"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a probability, got {v}")
        if self.num_factors < 1 or self.tokens_per_factor < 1:
            raise ValueError("need at least one factor with at least one token")
        if self.num_factors * self.tokens_per_factor > self.vocab_size:
            raise ValueError("factor blocks do not fit in the vocabulary")
        if not 1 <= self.max_active_factors <= self.num_factors:
            raise ValueError("max_active_factors must lie in [1, num_factors]")
        if not 1 <= self.min_cuis <= self.max_cuis:
            raise ValueError("need 1 <= min_cuis <= max_cuis")


def token_name(i: int) -> str:
    return f"C{i:07d}"


def code_for(j: int, rng: Rng):
    """Raw billing code for synthetic code ``j``: distinct category, random leaf digits."""
    kind = ("icd9_dx", "icd9_proc", "cpt")[j % 3]
    leaf = int(rng.integers(0, 10))
    if kind == "icd9_dx":
        return kind, f"{100 + 7 * j:03d}.{leaf}"
    if kind == "icd9_proc":
        return kind, f"{10 + j:02d}.{leaf}{int(rng.integers(0, 10))}"
    return kind, f"{100 + 10 * j:03d}{leaf}{int(rng.integers(0, 10))}"


def generate(cfg: SynthConfig | None = None):
    """Return ``(records, labels, factors)``.

    ``labels`` is a list of ``{"patient_id", "disease", "phenotype"}`` dicts
    (one per patient per disease); ``factors`` lists each patient's active
    factor tuple.
    """
    cfg = cfg or SynthConfig()
    root = Rng(cfg.seed).child("synth")
    F, B = cfg.num_factors, cfg.tokens_per_factor
    code_factor = np.arange(cfg.num_codes) % F
    records, labels, factors = [], [], []
    for i in range(cfg.num_patients):
        rng = root.child(f"patient-{i}")
        n_active = int(rng.integers(1, cfg.max_active_factors + 1))
        active = tuple(sorted(int(f) for f in rng.permutation(F)[:n_active]))
        length = int(rng.integers(cfg.min_cuis, cfg.max_cuis + 1))
        noise = rng.random(length) < cfg.noise_rate
        which = np.asarray(active)[rng.integers(0, n_active, size=length)]
        toks = np.where(noise, rng.integers(0, cfg.vocab_size, size=length),
                        which * B + rng.integers(0, B, size=length))
        on = np.isin(code_factor, active)
        fire = rng.random(cfg.num_codes) < np.where(on, cfg.code_on_prob, cfg.code_off_prob)
        codes = frozenset(code_for(int(j), rng) for j in np.flatnonzero(fire))
        pid = f"{cfg.id_prefix}{i:06d}"
        records.append(PatientRecord(pid, tuple(token_name(int(t)) for t in toks), codes))
        factors.append(active)
        for d in range(cfg.num_diseases):
            primary, secondary = d % F, (d + 1) % F
            if primary in active and secondary in active and rng.random() < cfg.questionable_prob:
                lab = "questionable"
            elif primary in active:
                lab = "present"
            else:
                lab = "absent"
            if lab != "questionable" and rng.random() < cfg.label_noise:
                lab = "absent" if lab == "present" else "present"
            labels.append({"patient_id": pid, "disease": f"disease{d}", "phenotype": lab})
    return records, labels, factors


def save_labels(labels, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in labels:
            fh.write(_canon(row) + "\n")


def load_labels(path) -> list:
    """Labels JSONL; rows without a ``disease`` key belong to the single disease ``phenotype``."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            o = json.loads(line)
            if "patient_id" not in o or "phenotype" not in o:
                raise ValueError(f"line {lineno}: labels need patient_id and phenotype")
            o.setdefault("disease", "phenotype")
            rows.append(o)
    return rows
