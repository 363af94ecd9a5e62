"""Command-line pipeline: synth, preprocess, pretrain, train, harvest, svd, classify, evaluate.

Every stage is a pure file transformation. Settings come from a flat JSON
config (``--config``) and can be overridden by a flag of the same name,
e.g. ``--epochs 10`` or ``--cbow_dim 50``; the flag wins.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import dan, svd
from .cbow import CbowConfig, save_text, train_cbow
from .corpus import (CodeSpace, CorpusError, EncodedDataset, PreprocessConfig, Vocabulary,
                     encode_corpus, load_corpus, preprocess, save_corpus)
from .eval import format_table, macro_prf, paired_t_test, report_json
from .pipeline import phenotype_scores
from .svm import SvmConfig, select_c
from .synth import LABELS, SynthConfig, generate, load_labels, save_labels

log = logging.getLogger("patientvec")

# config sections: (dataclass, key prefix, fields not exposed)
SECTIONS = {
    "synth": (SynthConfig, "", {"seed"}),
    "preprocess": (PreprocessConfig, "", {"seed"}),
    "cbow": (CbowConfig, "cbow_", {"seed"}),
    "dan": (dan.DanConfig, "", {"seed"}),
    "svm": (SvmConfig, "svm_", {"seed"}),
}
EXTRA = {
    "retrain": (bool, False),
    "svd_k": (int, 100),
    "svd_oversample": (int, 10),
    "svd_power_iters": (int, 2),
    "svd_binary": (bool, False),
    "svm_c_grid": (str, ""),
    "classify_train_fraction": (float, 0.8),
}
STAGE_SECTIONS = {
    "synth": ["synth"],
    "preprocess": ["preprocess"],
    "pretrain": ["cbow"],
    "train": ["dan"],
    "harvest": [],
    "svd": [],
    "classify": ["svm"],
    "evaluate": [],
}
STAGE_EXTRA = {
    "train": ["retrain"],
    "svd": ["svd_k", "svd_oversample", "svd_power_iters", "svd_binary"],
    "classify": ["svm_c_grid", "classify_train_fraction"],
}


class StageError(Exception):
    pass


def _parse_bool(s):
    if isinstance(s, bool):
        return s
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {s!r}")


def _field_type(f, default):
    if isinstance(default, bool):
        return _parse_bool
    if isinstance(default, int) and f.name != "patient_max_cuis":
        return int
    if isinstance(default, (int, float)) or default is None:
        return float
    return str


def _add_section_flags(p, stage):
    for sec in STAGE_SECTIONS[stage]:
        cls, prefix, hidden = SECTIONS[sec]
        for f in dataclasses.fields(cls):
            if f.name in hidden:
                continue
            key = prefix + f.name
            default = f.default
            if f.name == "tokens_per_factor":
                typ = int
            else:
                typ = _field_type(f, default)
            p.add_argument("--" + key, dest=key, type=typ, default=None, help=f"(default {default})")
    for key in STAGE_EXTRA.get(stage, []):
        typ, default = EXTRA[key]
        p.add_argument("--" + key, dest=key, type=_parse_bool if typ is bool else typ, default=None,
                       help=f"(default {default})")


def _settings(args, config: dict, section: str):
    cls, prefix, hidden = SECTIONS[section]
    kw = {}
    for f in dataclasses.fields(cls):
        if f.name in hidden:
            continue
        key = prefix + f.name
        val = getattr(args, key, None)
        if val is None and key in config:
            val = config[key]
        if val is not None:
            kw[f.name] = val
    if "seed" in {f.name for f in dataclasses.fields(cls)}:
        kw["seed"] = args.seed
    return cls(**kw)


def _extra(args, config, key):
    val = getattr(args, key, None)
    if val is None:
        val = config.get(key, EXTRA[key][1])
    return val


def _write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n")


def _read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(l) for l in fh if l.strip()]


def _load_data_dir(d):
    d = Path(d)
    for name in ("vocab.json", "codes.json", "encoded.jsonl"):
        if not (d / name).exists():
            raise StageError(f"missing {d / name}")
    vocab = Vocabulary.load(d / "vocab.json")
    codes = CodeSpace.load(d / "codes.json")
    ds = EncodedDataset.load(d / "encoded.jsonl", len(vocab), len(codes), vocab.hash())
    return vocab, codes, ds


def _require(*paths):
    for p in paths:
        if p is not None and not Path(p).exists():
            raise StageError(f"input file not found: {p}")


# ---------------------------------------------------------------- stages

def cmd_synth(args, config):
    cfg = _settings(args, config, "synth")
    records, labels, _ = generate(cfg)
    save_corpus(records, args.out_corpus)
    save_labels(labels, args.out_labels)
    log.info("wrote %d patients, %d label rows", len(records), len(labels))


def cmd_preprocess(args, config):
    _require(args.corpus)
    cfg = _settings(args, config, "preprocess")
    vocab, codes, ds = preprocess(load_corpus(args.corpus), cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vocab.save(out / "vocab.json")
    codes.save(out / "codes.json")
    ds.save(out / "encoded.jsonl")
    log.info("vocabulary hash %s", vocab.hash())


def cmd_pretrain(args, config):
    vocab, _, ds = _load_data_dir(args.data)
    cfg = _settings(args, config, "cbow")
    model = train_cbow([p.sequence for p in ds.patients], len(vocab), cfg)
    meta = {"dim": cfg.dim, "n_cuis": len(vocab), "config": dataclasses.asdict(cfg),
            "epoch_losses": model.epoch_losses}
    ckpt.save(args.out, ckpt.Checkpoint("cbow", {"embeddings": model.syn0, "output": model.syn1},
                                        meta, vocab.hash()))
    if args.out_text:
        save_text(args.out_text, vocab.tokens, model.syn0)


def _dan_checkpoint(model, cfg, vocab_hash, codes):
    meta = {"activation": model.activation, "config": dataclasses.asdict(cfg),
            "codes": codes.tokens, "n_cuis": int(model.E.shape[0])}
    return ckpt.Checkpoint("dan", model.arrays(), meta, vocab_hash)


def _load_dan(path):
    ck = ckpt.load(path, "dan")
    return ck, dan.DanModel.from_arrays(ck.arrays, ck.meta.get("activation", "relu"))


def cmd_train(args, config):
    vocab, codes, ds = _load_data_dir(args.data)
    cfg = _settings(args, config, "dan")
    emb = None
    if args.embeddings:
        _require(args.embeddings)
        e = ckpt.load(args.embeddings, "cbow")
        e.require_vocab(vocab.hash())
        emb = e.arrays["embeddings"]
    model, history = dan.train(ds, cfg, embeddings=emb, retrain=bool(_extra(args, config, "retrain")))
    ckpt.save(args.out, _dan_checkpoint(model, cfg, vocab.hash(), codes))
    if args.log:
        _write_jsonl(args.log, history)


def _target(corpus_path, vocab_path):
    _require(corpus_path, vocab_path)
    vocab = Vocabulary.load(vocab_path)
    return vocab, encode_corpus(load_corpus(corpus_path), vocab)


def cmd_harvest(args, config):
    _require(args.model)
    ck, model = _load_dan(args.model)
    vocab, tgt = _target(args.corpus, args.vocab)
    ck.require_vocab(vocab.hash())
    vecs = dan.harvest(model, [p.cuis for p in tgt.patients])
    _write_jsonl(args.out, ({"patient_id": p.patient_id, "vector": v.tolist()}
                            for p, v in zip(tgt.patients, vecs)))


def cmd_svd(args, config):
    vocab, _, ds = _load_data_dir(args.data)
    binary = bool(_extra(args, config, "svd_binary"))
    k = int(_extra(args, config, "svd_k"))
    fact = svd.fit_truncated_svd(ds.features(binary=binary), k, seed=args.seed,
                                 oversample=int(_extra(args, config, "svd_oversample")),
                                 power_iters=int(_extra(args, config, "svd_power_iters")))
    meta = {"k": k, "binary": binary, "n_cuis": len(vocab)}
    ckpt.save(args.out, ckpt.Checkpoint("svd", {"singular_values": fact.singular_values,
                                               "components": fact.components}, meta, vocab.hash()))
    if args.corpus:
        if not args.vectors:
            raise StageError("--corpus given without --vectors output path")
        tvocab, tgt = _target(args.corpus, args.vocab or Path(args.data) / "vocab.json")
        if tvocab.hash() != vocab.hash():
            raise StageError(f"vocabulary hash mismatch: checkpoint has {vocab.hash()}, data has {tvocab.hash()}")
        proj = svd.project(fact, tgt.features(binary=binary))
        _write_jsonl(args.vectors, ({"patient_id": p.patient_id, "vector": v.tolist()}
                                    for p, v in zip(tgt.patients, proj)))


def _read_vectors(path):
    rows = _read_jsonl(path)
    ids = [r["patient_id"] for r in rows]
    X = np.asarray([r["vector"] for r in rows], dtype=np.float64)
    if len(set(ids)) != len(ids):
        raise StageError(f"duplicate patient_id in {path}")
    return ids, X


def cmd_classify(args, config):
    _require(args.labels)
    labels = load_labels(args.labels)
    cfg = _settings(args, config, "svm")
    vocab_hash, meta_extra = "", {}
    if args.features == "sparse":
        if not args.corpus:
            raise StageError("--features sparse needs --corpus")
        _require(args.corpus)
        corpus = load_corpus(args.corpus)
        vocab = (Vocabulary.load(args.vocab) if args.vocab
                 else Vocabulary(sorted({t for r in corpus for t in r.cuis})))
        enc = encode_corpus(corpus, vocab)
        ids = [p.patient_id for p in enc.patients]
        X = enc.features(binary=True)
        vocab_hash = vocab.hash()
        if not args.vocab:
            meta_extra["vocabulary"] = vocab.tokens
    else:
        if not args.vectors:
            raise StageError(f"--features {args.features} needs --vectors")
        _require(args.vectors)
        ids, X = _read_vectors(args.vectors)
    grid = _extra(args, config, "svm_c_grid")
    if isinstance(grid, str):
        grid = [float(c) for c in grid.split(",") if c.strip()]
    frac = float(_extra(args, config, "classify_train_fraction"))
    if grid:
        row = {pid: i for i, pid in enumerate(ids)}
        chosen = {}
        for disease in sorted({l["disease"] for l in labels}):
            rows = [l for l in labels if l["disease"] == disease and l["patient_id"] in row]
            y = np.array([LABELS.index(l["phenotype"]) for l in rows])
            chosen[disease] = select_c(X[[row[l["patient_id"]] for l in rows]], y, LABELS, grid, cfg=cfg)
        # one C for all diseases: the most frequently selected, smallest on ties
        votes = Counter(chosen.values())
        best = max(votes.values())
        cfg = dataclasses.replace(cfg, C=min(c for c, n in votes.items() if n == best))
        meta_extra["c_selected"] = chosen
    reports, preds, models = phenotype_scores(X, labels, ids, cfg, args.seed, frac,
                                              threads=args.threads, return_models=True)
    arrays = {}
    for disease, m in models.items():
        arrays[f"{disease}/W"] = m.W
        arrays[f"{disease}/b"] = m.b
        arrays[f"{disease}/present"] = m.present.astype(np.float64)
    meta = {"classes": list(LABELS), "diseases": sorted(models), "features": args.features,
            "C": cfg.C, "train_fraction": frac, **meta_extra}
    ckpt.save(args.out_model, ckpt.Checkpoint("svm", arrays, meta, vocab_hash))
    _write_jsonl(args.out_predictions, ({"patient_id": pid, "disease": d, "phenotype": lab}
                                        for d in sorted(preds) for pid, lab in preds[d]))


def cmd_evaluate(args, config):
    _require(args.gold)
    gold = {(r["disease"], r["patient_id"]): r["phenotype"] for r in load_labels(args.gold)}
    systems = {}
    for spec in args.pred:
        name, _, path = spec.rpartition("=")
        name = name or Path(path).stem
        _require(path)
        per = {}
        for r in load_labels(path):
            key = (r["disease"], r["patient_id"])
            if key not in gold:
                raise StageError(f"{path}: no gold label for patient {r['patient_id']} / {r['disease']}")
            per.setdefault(r["disease"], ([], []))
            per[r["disease"]][0].append(gold[key])
            per[r["disease"]][1].append(r["phenotype"])
        systems[name] = {d: macro_prf(g, p, LABELS) for d, (g, p) in per.items()}
    if not systems:
        raise StageError("no predictions given")
    diseases = sorted(set.intersection(*(set(s) for s in systems.values())))
    ttest = None
    names = list(systems)
    if args.ttest or len(names) >= 2:
        a, b = (args.ttest.split(",") if args.ttest else (names[0], names[-1]))
        for n in (a, b):
            if n not in systems:
                raise StageError(f"unknown system {n!r} for --ttest")
        fa = [systems[a][d].macro_f1 for d in diseases]
        fb = [systems[b][d].macro_f1 for d in diseases]
        try:
            t, p, df = paired_t_test(fa, fb)
            ttest = {"a": a, "b": b, "t": t, "p": p, "df": df}
        except ValueError as e:
            ttest = {"a": a, "b": b, "error": str(e)}
    text = format_table(systems, diseases)
    if ttest is not None:
        text += (f"paired t-test {ttest['b']} vs {ttest['a']}: t={ttest['t']:.4f} df={ttest['df']} p={ttest['p']:.4f}\n"
                 if "t" in ttest else f"paired t-test {ttest['b']} vs {ttest['a']}: {ttest['error']}\n")
    Path(args.out_json).write_text(report_json(systems, diseases, ttest), encoding="utf-8")
    if args.out_table:
        Path(args.out_table).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


COMMANDS = {
    "synth": cmd_synth, "preprocess": cmd_preprocess, "pretrain": cmd_pretrain, "train": cmd_train,
    "harvest": cmd_harvest, "svd": cmd_svd, "classify": cmd_classify, "evaluate": cmd_evaluate,
}


def _common(default):
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=default, help="flat JSON config file")
    common.add_argument("--seed", type=int, default=default, help="random seed (default 0)")
    common.add_argument("--threads", type=int, default=default, help="worker threads (default 1)")
    common.add_argument("-v", "--verbose", action="store_true", default=default)
    return common


def build_parser():
    # global flags are accepted before or after the subcommand; the subcommand
    # copy uses SUPPRESS so it never overwrites a value given before it
    parser = argparse.ArgumentParser(prog="patientvec", description=__doc__.splitlines()[0],
                                     parents=[_common(None)])
    sub = parser.add_subparsers(dest="command", required=True)
    sub_common = _common(argparse.SUPPRESS)

    def add(name, help):
        p = sub.add_parser(name, help=help, parents=[sub_common])
        _add_section_flags(p, name)
        return p

    p = add("synth", "generate a synthetic corpus and phenotype labels")
    p.add_argument("--out-corpus", required=True)
    p.add_argument("--out-labels", required=True)

    p = add("preprocess", "filter, encode and split a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", required=True)

    p = add("pretrain", "CBOW pretraining of CUI embeddings")
    p.add_argument("--data", required=True, help="preprocess output directory")
    p.add_argument("--out", required=True)
    p.add_argument("--out-text", help="also write embeddings as text")

    p = add("train", "train the averaging network on billing codes")
    p.add_argument("--data", required=True)
    p.add_argument("--embeddings", help="cbow checkpoint for initialisation")
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="per-epoch JSONL training log")

    p = add("harvest", "hidden-layer vectors for a target corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)

    p = add("svd", "truncated SVD of the patient-CUI matrix")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--corpus", help="target corpus to project")
    p.add_argument("--vocab", help="vocabulary for the target corpus (default: DATA/vocab.json)")
    p.add_argument("--vectors", help="output vectors for the projected target corpus")

    p = add("classify", "per-disease one-vs-all SVMs")
    p.add_argument("--features", required=True, choices=("sparse", "svd-vectors", "dan-vectors"))
    p.add_argument("--labels", required=True)
    p.add_argument("--vectors")
    p.add_argument("--corpus")
    p.add_argument("--vocab")
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-predictions", required=True)

    p = add("evaluate", "macro P/R/F1 report and paired t-test")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", action="append", required=True, metavar="NAME=PATH")
    p.add_argument("--ttest", metavar="A,B", help="systems to compare (default: first vs last)")
    p.add_argument("--out-json", required=True)
    p.add_argument("--out-table")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = {}
        if args.config:
            _require(args.config)
            config = json.loads(Path(args.config).read_text(encoding="utf-8"))
            if not isinstance(config, dict):
                raise StageError("config must be a JSON object")
        if args.seed is None:
            args.seed = int(config.get("seed", 0))
        if args.threads is None:
            args.threads = int(config.get("threads", 1))
        COMMANDS[args.command](args, config)
    except (StageError, CorpusError, ckpt.CheckpointError, ValueError, KeyError, OSError) as e:
        print(f"patientvec {args.command}: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
