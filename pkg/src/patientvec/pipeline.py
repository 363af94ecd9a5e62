"""End-to-end transfer experiment on synthetic source/target corpora.

Phase 1 trains the averaging network on the source corpus (billing codes);
phase 2 harvests hidden vectors for the target corpus and trains one-vs-all
SVMs per disease, next to the sparse bag-of-CUIs and SVD baselines.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import dan, svd
from .cbow import CbowConfig, train_cbow
from .corpus import PreprocessConfig, Vocabulary, encode_corpus, preprocess
from .eval import average_over_diseases, macro_prf, multilabel_macro_f1
from .numeric import Rng
from .svm import SvmConfig, predict, train_one_vs_all
from .synth import LABELS, SynthConfig, generate

log = logging.getLogger(__name__)

# desk-scale thresholds: 2000 synthetic patients instead of 44k
DESK_PREPROCESS = dict(cui_min_freq=100, patient_max_cuis=10000, code_min_patients=45)


def majority_code_baseline(Ytrain, Yval) -> float:
    """Macro-F1 of predicting each code's majority training value for every patient."""
    majority = (Ytrain.mean(axis=0) > 0.5).astype(np.int64)
    return multilabel_macro_f1(Yval, np.tile(majority, (len(Yval), 1)))


def split_mask(n: int, fraction: float, rng: Rng) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    mask[rng.permutation(n)[: int(np.floor(fraction * n))]] = True
    return mask


def phenotype_scores(features, labels, patient_ids, svm_cfg: SvmConfig, seed: int,
                     train_fraction: float = 0.8, threads: int = 1, return_models: bool = False):
    """Per-disease macro reports of one-vs-all SVMs on a seeded train/test split.

    Returns ``(reports, predictions)`` where ``predictions`` maps disease ->
    list of (patient_id, predicted label) for the held-out patients, plus the
    per-disease models when ``return_models`` is set.
    """
    row = {pid: i for i, pid in enumerate(patient_ids)}
    by_disease = {}
    for lab in labels:
        by_disease.setdefault(lab["disease"], []).append(lab)
    reports, preds, models = {}, {}, {}
    for disease in sorted(by_disease):
        rows = [r for r in by_disease[disease] if r["patient_id"] in row]
        idx = np.array([row[r["patient_id"]] for r in rows])
        y = np.array([LABELS.index(r["phenotype"]) for r in rows])
        train = split_mask(len(rows), train_fraction, Rng(seed).child(f"pheno-split-{disease}"))
        model = train_one_vs_all(features[idx[train]], y[train], LABELS, svm_cfg, threads=threads)
        yhat = predict(model, features[idx[~train]])
        reports[disease] = macro_prf(y[~train], yhat, range(len(LABELS)))
        preds[disease] = [(rows[i]["patient_id"], LABELS[c]) for i, c in zip(np.flatnonzero(~train), yhat)]
        models[disease] = model
    if return_models:
        return reports, preds, models
    return reports, preds


@dataclass
class TransferResult:
    seed: int
    code_val_f1: float
    code_majority_f1: float
    phenotype_f1: dict = field(default_factory=dict)   # arm -> disease-averaged macro-F1
    history: list = field(default_factory=list)


def run_transfer(seed: int, synth_cfg: SynthConfig | None = None, pre_cfg: PreprocessConfig | None = None,
                 dan_cfg: dan.DanConfig | None = None, svm_cfg: SvmConfig | None = None,
                 cbow_cfg: CbowConfig | None = None, pretrain: bool = False, svd_k: int = 100,
                 arms=("learned", "untrained", "sparse", "svd"), retrain: bool = True,
                 threads: int = 1) -> TransferResult:
    synth_cfg = synth_cfg or SynthConfig()
    pre_cfg = replace(pre_cfg or PreprocessConfig(**DESK_PREPROCESS), seed=seed)
    dan_cfg = replace(dan_cfg or dan.DanConfig(), seed=seed)
    svm_cfg = replace(svm_cfg or SvmConfig(), seed=seed)

    source, _, _ = generate(replace(synth_cfg, seed=seed, id_prefix="src"))
    target, labels, _ = generate(replace(synth_cfg, seed=seed + 10_000, id_prefix="tgt"))
    vocab, codes, ds = preprocess(source, pre_cfg)

    emb = None
    if pretrain:
        cbow_cfg = replace(cbow_cfg or CbowConfig(), dim=dan_cfg.embed_dim, seed=seed)
        emb = train_cbow([p.sequence for p in ds.patients], len(vocab), cbow_cfg).embeddings

    model, history = dan.train(ds, dan_cfg, embeddings=emb)
    val = ds.subset("validation")
    result = TransferResult(seed, history[-1]["val_macro_f1"] if history else float("nan"),
                            majority_code_baseline(ds.targets(ds.subset("train")), ds.targets(val)),
                            history=history)
    if not any(a in arms for a in ("learned", "untrained", "sparse", "svd")):
        return result
    if retrain and "learned" in arms:
        model, _ = dan.train(ds, dan_cfg, embeddings=emb, retrain=True)

    tgt = encode_corpus(target, vocab)
    ids = [p.patient_id for p in tgt.patients]
    batch = [p.cuis for p in tgt.patients]
    feats = {}
    if "learned" in arms:
        feats["learned"] = dan.harvest(model, batch)
    if "untrained" in arms:
        feats["untrained"] = dan.harvest(dan.init_model(ds.n_cuis, ds.n_codes, dan_cfg, emb), batch)
    if "sparse" in arms:
        own = Vocabulary(sorted({t for r in target for t in r.cuis}))
        feats["sparse"] = encode_corpus(target, own).features(binary=True)
    if "svd" in arms:
        fact = svd.fit_truncated_svd(ds.features(binary=False), min(svd_k, len(vocab), len(ds)), seed=seed)
        feats["svd"] = svd.project(fact, tgt.features(binary=False))
    for arm, X in feats.items():
        reports, _ = phenotype_scores(X, labels, ids, svm_cfg, seed, threads=threads)
        result.phenotype_f1[arm] = average_over_diseases(r.macro_f1 for r in reports.values())
        log.info("seed %d arm %s phenotype macro-F1 %.4f", seed, arm, result.phenotype_f1[arm])
    return result
