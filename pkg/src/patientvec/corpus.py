"""Patient corpus ingestion, filtering and encoding.

A corpus file is JSON Lines, one patient per line::

    {"patient_id": "p1", "cuis": ["C0013404", ...],
     "codes": [{"type": "icd9_dx", "code": "401.9"}, ...]}

:func:`preprocess` applies, in this order: the CUI frequency filter, the
patient-size filter, the billing-code frequency filter, and removal of
patients left with no CUIs or no codes. Thresholds are "fewer than" rules:
an item survives when its count is at least the threshold.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .numeric import Rng, csr_from_rows

log = logging.getLogger(__name__)

CODE_TYPES = ("icd9_dx", "icd9_proc", "cpt")
_TYPE_TAG = {"icd9_dx": "DX", "icd9_proc": "PR", "cpt": "CPT"}


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    cuis: tuple
    codes: frozenset  # of (code_type, code_string)

    def to_json(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "cuis": list(self.cuis),
            "codes": [{"type": t, "code": c} for t, c in sorted(self.codes)],
        }


@dataclass
class PreprocessConfig:
    cui_min_freq: int = 100
    patient_max_cuis: float = 10000
    code_min_patients: int = 1000
    dx_prefix: int = 3
    ecode_prefix: int = 4
    proc_prefix: int = 2
    cpt_prefix: int = 3
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        for name in ("cui_min_freq", "patient_max_cuis", "code_min_patients",
                     "dx_prefix", "ecode_prefix", "proc_prefix", "cpt_prefix"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


class Vocabulary:
    """Dense token <-> index bijection with per-token frequencies."""

    def __init__(self, tokens, freqs=None):
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise CorpusError("duplicate token in vocabulary")
        self.freqs = list(freqs) if freqs is not None else [0] * len(self.tokens)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def hash(self) -> str:
        """sha256 over the canonical JSON array of tokens in index order."""
        return hashlib.sha256(_canon(self.tokens).encode("utf-8")).hexdigest()

    def save(self, path):
        Path(path).write_text(_canon(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))


class CodeSpace(Vocabulary):
    """Collapsed billing code <-> output unit; ``freqs`` are positive-patient counts."""


@dataclass
class EncodedPatient:
    patient_id: str
    cuis: np.ndarray        # sorted unique indices
    counts: np.ndarray      # multiplicity of each entry of ``cuis``
    sequence: np.ndarray    # in-vocabulary tokens in document order
    codes: np.ndarray       # sorted unique code indices
    split: str = "train"


@dataclass
class EncodedDataset:
    patients: list
    n_cuis: int
    n_codes: int
    vocab_hash: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.patients)

    def subset(self, split: str | None) -> list:
        if split is None:
            return list(self.patients)
        return [p for p in self.patients if p.split == split]

    def targets(self, patients=None) -> np.ndarray:
        patients = self.patients if patients is None else patients
        y = np.zeros((len(patients), self.n_codes))
        for i, p in enumerate(patients):
            y[i, p.codes] = 1.0
        return y

    def features(self, patients=None, binary: bool = True) -> sp.csr_matrix:
        """Bag-of-CUIs matrix (patients x CUIs): presence, or counts when ``binary`` is False."""
        patients = self.patients if patients is None else patients
        return csr_from_rows([p.cuis for p in patients],
                             None if binary else [p.counts for p in patients],
                             n_cols=self.n_cuis)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for p in self.patients:
                fh.write(_canon({
                    "patient_id": p.patient_id,
                    "cuis": p.cuis.tolist(),
                    "counts": p.counts.tolist(),
                    "sequence": p.sequence.tolist(),
                    "codes": p.codes.tolist(),
                    "split": p.split,
                }) + "\n")

    @classmethod
    def load(cls, path, n_cuis: int, n_codes: int, vocab_hash: str = ""):
        patients = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                o = json.loads(line)
                patients.append(EncodedPatient(
                    o["patient_id"],
                    np.asarray(o["cuis"], dtype=np.int64),
                    np.asarray(o["counts"], dtype=np.int64),
                    np.asarray(o["sequence"], dtype=np.int64),
                    np.asarray(o["codes"], dtype=np.int64),
                    o["split"],
                ))
        return cls(patients, n_cuis, n_codes, vocab_hash)


def _canon(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _parse_record(obj, lineno: int) -> PatientRecord:
    if not isinstance(obj, dict):
        raise CorpusError(f"line {lineno}: expected a JSON object")
    try:
        pid = obj["patient_id"]
        cuis = obj["cuis"]
        codes = obj.get("codes", [])
    except KeyError as e:
        raise CorpusError(f"line {lineno}: missing field {e}") from None
    if not isinstance(pid, str) or not pid:
        raise CorpusError(f"line {lineno}: patient_id must be a non-empty string")
    if not isinstance(cuis, list) or not all(isinstance(c, str) for c in cuis):
        raise CorpusError(f"line {lineno}: cuis must be a list of strings")
    parsed = set()
    for c in codes:
        if not isinstance(c, dict) or "type" not in c or "code" not in c:
            raise CorpusError(f"line {lineno}: malformed code entry {c!r}")
        if c["type"] not in CODE_TYPES:
            raise CorpusError(f"line {lineno}: unknown code_type {c['type']!r}")
        parsed.add((c["type"], str(c["code"])))
    return PatientRecord(pid, tuple(cuis), frozenset(parsed))


def load_corpus(path) -> list:
    """Read a JSONL corpus. Duplicate ids and malformed lines raise :class:`CorpusError`."""
    records = []
    seen = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"line {lineno}: malformed JSON ({e.msg})") from None
            rec = _parse_record(obj, lineno)
            if rec.patient_id in seen:
                raise CorpusError(
                    f"duplicate patient_id {rec.patient_id!r} on lines {seen[rec.patient_id]} and {lineno}")
            seen[rec.patient_id] = lineno
            records.append(rec)
    return records


def save_corpus(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(_canon(r.to_json()) + "\n")


def collapse_code(code_type: str, code_string: str, cfg: PreprocessConfig | None = None) -> str:
    """Map a billing code to its general category, tagged by code system.

    >>> collapse_code("icd9_dx", "401.9")
    'DX:401'
    >>> collapse_code("cpt", "99291")
    'CPT:992'
    """
    cfg = cfg or PreprocessConfig()
    code = code_string.strip()
    if not code:
        raise CorpusError("empty code string")
    if code_type == "icd9_dx":
        n = cfg.ecode_prefix if code[0] in "Ee" else cfg.dx_prefix
        body = code.replace(".", "")[:n]
    elif code_type == "icd9_proc":
        body = code.replace(".", "")[:cfg.proc_prefix]
    elif code_type == "cpt":
        body = code[:cfg.cpt_prefix]
    else:
        raise CorpusError(f"unknown code_type {code_type!r}")
    return f"{_TYPE_TAG[code_type]}:{body.upper()}"


def encode_patient(record: PatientRecord, vocab: Vocabulary):
    """Return ``(unique sorted indices, counts, in-vocabulary sequence)``.

    Out-of-vocabulary tokens are dropped silently.
    """
    seq = np.asarray([vocab.index[t] for t in record.cuis if t in vocab.index], dtype=np.int64)
    uniq, counts = np.unique(seq, return_counts=True)
    return uniq.astype(np.int64), counts.astype(np.int64), seq


def split_indices(n: int, train_fraction: float, rng: Rng) -> np.ndarray:
    """Boolean train mask: seeded shuffle, then the first floor(fraction*n) are train."""
    n_train = int(np.floor(train_fraction * n))
    perm = rng.permutation(n)
    mask = np.zeros(n, dtype=bool)
    mask[perm[:n_train]] = True
    return mask


def preprocess(corpus, cfg: PreprocessConfig | None = None):
    """Filter, build vocabularies, encode and split.

    Returns ``(Vocabulary, CodeSpace, EncodedDataset)``.
    """
    cfg = cfg or PreprocessConfig()
    if not corpus:
        raise CorpusError("empty corpus")

    final = [(r, list(r.cuis), {collapse_code(t, c, cfg) for t, c in r.codes}) for r in corpus]
    # Dropping patients lowers other items' counts, so the ordered filter pass
    # is repeated until nothing changes; this makes preprocess idempotent.
    while True:
        before = (len(final), sum(len(t) for _, t, _ in final), sum(len(c) for _, _, c in final))
        cui_freq = Counter(t for _, toks, _ in final for t in toks)
        kept_cuis = {t for t, n in cui_freq.items() if n >= cfg.cui_min_freq}
        final = [(r, [t for t in toks if t in kept_cuis], cs) for r, toks, cs in final]
        final = [x for x in final if len(x[1]) <= cfg.patient_max_cuis]
        code_freq = Counter(c for _, _, cs in final for c in cs)
        kept_codes = {c for c, n in code_freq.items() if n >= cfg.code_min_patients}
        final = [(r, toks, cs & kept_codes) for r, toks, cs in final]
        final = [x for x in final if x[1] and x[2]]
        if not final:
            raise CorpusError("all patients were filtered out")
        after = (len(final), sum(len(t) for _, t, _ in final), sum(len(c) for _, _, c in final))
        if after == before:
            break

    # vocabularies over surviving patients only, so re-running is a no-op
    tok_freq = Counter(t for _, toks, _ in final for t in toks)
    vocab = Vocabulary(sorted(tok_freq), [tok_freq[t] for t in sorted(tok_freq)])
    pos_freq = Counter(c for _, _, cs in final for c in cs)
    codes = CodeSpace(sorted(pos_freq), [pos_freq[c] for c in sorted(pos_freq)])

    train_mask = split_indices(len(final), cfg.train_fraction, Rng(cfg.seed).child("split"))
    encoded = []
    for (r, toks, cs), is_train in zip(final, train_mask):
        uniq, counts, seq = encode_patient(r, vocab)
        encoded.append(EncodedPatient(
            r.patient_id, uniq, counts, seq,
            np.asarray(sorted(codes.index[c] for c in cs), dtype=np.int64),
            "train" if is_train else "validation",
        ))
    log.info("preprocess: %d -> %d patients, %d CUIs, %d codes",
             len(corpus), len(encoded), len(vocab), len(codes))
    return vocab, codes, EncodedDataset(encoded, len(vocab), len(codes), vocab.hash())


def encode_corpus(corpus, vocab: Vocabulary) -> EncodedDataset:
    """Encode a foreign corpus against an existing vocabulary (no filtering, no codes)."""
    pats = []
    for r in corpus:
        uniq, counts, seq = encode_patient(r, vocab)
        pats.append(EncodedPatient(r.patient_id, uniq, counts, seq, np.zeros(0, dtype=np.int64), "target"))
    return EncodedDataset(pats, len(vocab), 0, vocab.hash())


def records_from_encoded(dataset: EncodedDataset, vocab: Vocabulary, codes: CodeSpace) -> list:
    """Rebuild records from an encoding; codes come back in their collapsed form."""
    out = []
    for p in dataset.patients:
        cs = set()
        for ci in p.codes:
            tag, body = codes.tokens[ci].split(":", 1)
            ctype = {v: k for k, v in _TYPE_TAG.items()}[tag]
            cs.add((ctype, body))
        out.append(PatientRecord(p.patient_id, tuple(vocab.tokens[i] for i in p.sequence), frozenset(cs)))
    return out
