import math
from collections import Counter

import numpy as np
import pytest

from patientvec.corpus import Vocabulary, collapse_code, encode_corpus, load_corpus, save_corpus
from patientvec.eval import average_over_diseases
from patientvec.pipeline import phenotype_scores
from patientvec.svm import SvmConfig
from patientvec.synth import LABELS, SynthConfig, generate, load_labels, save_labels


def code_index(ctype, code):
    body = collapse_code(ctype, code).split(":")[1]
    if ctype == "icd9_dx":
        return (int(body) - 100) // 7
    if ctype == "icd9_proc":
        return int(body) - 10
    return (int(body) - 100) // 10


def plugin_mi(xs, ys):
    n = len(xs)
    joint = Counter(zip(xs, ys))
    px, py = Counter(xs), Counter(ys)
    return sum(c / n * math.log(c * n / (px[a] * py[b])) for (a, b), c in joint.items())


def test_noiseless_codes_identify_factors():
    cfg = SynthConfig(num_patients=200, noise_rate=0.0, code_on_prob=1.0, code_off_prob=0.0, seed=4)
    records, _, factors = generate(cfg)
    B = cfg.tokens_per_factor
    for r, active in zip(records, factors):
        from_codes = {code_index(t, c) % cfg.num_factors for t, c in r.codes}
        assert from_codes == set(active)
        assert {int(t[1:]) // B for t in r.cuis} <= set(active)


def test_each_patient_one_or_two_factors():
    _, _, factors = generate(SynthConfig(num_patients=300, seed=1))
    assert {len(f) for f in factors} == {1, 2}


def test_determinism(tmp_path):
    a = generate(SynthConfig(num_patients=50, seed=9))
    b = generate(SynthConfig(num_patients=50, seed=9))
    save_corpus(a[0], tmp_path / "a.jsonl")
    save_corpus(b[0], tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert a[1] == b[1]
    c = generate(SynthConfig(num_patients=50, seed=10))
    assert c[0] != a[0]


def test_corpus_passes_validation(tmp_path):
    records, labels, _ = generate(SynthConfig(num_patients=80, seed=2))
    save_corpus(records, tmp_path / "c.jsonl")
    assert load_corpus(tmp_path / "c.jsonl") == records
    save_labels(labels, tmp_path / "l.jsonl")
    assert load_labels(tmp_path / "l.jsonl") == labels
    assert {l["phenotype"] for l in labels} <= set(LABELS)


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(vocab_size=10, num_factors=4, tokens_per_factor=3)
    with pytest.raises(ValueError):
        SynthConfig(noise_rate=1.5)


def test_questionable_is_rare_but_present():
    _, labels, _ = generate(SynthConfig())
    frac = Counter(l["phenotype"] for l in labels)["questionable"] / len(labels)
    assert 0.0 < frac < 0.15


def test_codes_informative_about_phenotype():
    records, labels, _ = generate(SynthConfig())
    code_sets = {r.patient_id: {code_index(t, c) for t, c in r.codes} for r in records}
    for d in range(4):
        rows = [l for l in labels if l["disease"] == f"disease{d}"]
        xs = [d in code_sets[l["patient_id"]] for l in rows]     # code d is linked to factor d
        assert plugin_mi(xs, [l["phenotype"] for l in rows]) > 0.01


@pytest.mark.slow
def test_sparse_baseline_anchor():
    records, labels, _ = generate(SynthConfig())
    vocab = Vocabulary(sorted({t for r in records for t in r.cuis}))
    enc = encode_corpus(records, vocab)
    reports, _ = phenotype_scores(enc.features(binary=True), labels, [p.patient_id for p in enc.patients],
                                  SvmConfig(), seed=0)
    assert average_over_diseases(r.macro_f1 for r in reports.values()) > 0.6
