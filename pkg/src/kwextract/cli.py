"""``kwextract`` command line: generate data, train, extract, run baselines, evaluate, ablate, grad-check.

Every config key ``section.key`` can be given in a ``--config`` file and
overridden on the command line as ``--section.key VALUE``.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .baselines import IdfTable, build_idf, run_embedrank, run_tfidf
from .checkpoint import load_checkpoint
from .config import all_keys, load_config
from .data import ImageFeatureStore, generate_synthetic, load_dataset
from .errors import KwExtractError, ValidationError
from .evaluation import compare_methods, comparison_jsonl, format_comparison, format_per_type
from .model import ABLATIONS, KeywordModel, extract_dataset
from .text import read_embedding_file

log = logging.getLogger("kwextract")

COMMANDS = ("gen-synthetic", "train", "extract", "baseline", "eval", "ablate", "grad-check")
METHODS = ("model", "tfidf", "embedrank")


class StageError(Exception):
    """Carries the failing stage name up to :func:`dispatch`."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage


def build_parser():
    parser = argparse.ArgumentParser(prog="kwextract", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "gen-synthetic": "write a synthetic planted-keyword dataset",
        "train": "train the keyword model",
        "extract": "write model keyword predictions as JSON lines",
        "baseline": "write TF-IDF or EmbedRank predictions as JSON lines",
        "eval": "compare methods on a dataset (accuracy, Mean Rank)",
        "ablate": "train and compare the four model variants",
        "grad-check": "finite-difference check of every differentiable operation",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", metavar="PATH", help="flat key-value config file")
        p.add_argument("--seed", type=int, help="global seed (overrides train.seed and synthetic.seed)")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--methods", metavar="CSV", help=f"comma-separated subset of {','.join(METHODS)}")
        p.add_argument("--ablation", choices=ABLATIONS, help="model variant")
        p.add_argument("-v", "--verbose", action="store_true")
        group = p.add_argument_group("config overrides")
        for key in all_keys():
            group.add_argument(f"--{key}", dest=key, metavar="VALUE", default=None)
    return parser


def _overrides(args):
    out = {k: getattr(args, k) for k in all_keys() if getattr(args, k, None) is not None}
    shortcuts = {"seed": "run.seed", "out": "run.out", "methods": "run.methods", "ablation": "model.ablation"}
    for flag, key in shortcuts.items():
        value = getattr(args, flag)
        if value is not None:
            out[key] = str(value)
    return out


def _require(path, what):
    if not path:
        hint = "" if what == "checkpoint" else " or data.dir"
        raise ValidationError(f"missing required path data.{what} (set it{hint})")
    if not Path(path).exists():
        raise ValidationError(f"data.{what} does not exist: {path}")
    return path


def _methods(cfg):
    methods = [m.strip() for m in cfg.run.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise ValidationError(f"unknown method(s) {bad}; choose from {', '.join(METHODS)}")
    return methods


def _write_predictions(path, extractions):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for ext in extractions:
            fh.write(json.dumps(ext.to_json()) + "\n")
    return path


def _load_model(cfg):
    ckpt = cfg.data.checkpoint or str(Path(cfg.run.out) / "checkpoint.ckpt")
    _require(ckpt, "checkpoint")
    params, meta = load_checkpoint(ckpt)
    return KeywordModel.from_state(params, meta)


def _eval_examples(cfg):
    return load_dataset(_require(cfg.data.resolve("eval_path"), "eval_path"))


def _idf(cfg):
    if cfg.data.idf_path:
        return IdfTable.load(_require(cfg.data.idf_path, "idf_path"))
    train_path = cfg.data.resolve("train_path")
    source = train_path if train_path and Path(train_path).exists() else cfg.data.resolve("eval_path")
    return build_idf([ex.answer_tokens for ex in load_dataset(_require(source, "train_path"))])


def _embeddings(cfg):
    return read_embedding_file(_require(cfg.data.resolve("embeddings_path"), "embeddings_path"))


# -- commands ---------------------------------------------------------------------------

def cmd_gen_synthetic(cfg):
    out = cfg.data.dir or cfg.run.out
    paths = generate_synthetic(cfg.synthetic, out)
    for name, p in paths.items():
        print(f"{name}: {p}")


def cmd_train(cfg):
    from .training import train

    examples = load_dataset(_require(cfg.data.resolve("train_path"), "train_path"))
    features = ImageFeatureStore(_require(cfg.data.resolve("features_path"), "features_path"))
    emb = cfg.data.resolve("embeddings_path") or None
    if emb:
        _require(emb, "embeddings_path")
    out = Path(cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run.cfg").write_text(cfg.to_text(), encoding="utf-8")
    res = train(examples, features, cfg.model, cfg.train, embeddings_path=emb, out_dir=out)
    last = res.log[-1]
    print(f"trained {res.iterations} iterations; final L={last.total:.4f} "
          f"(L_all={last.l_all:.4f}, L_a={last.l_a:.4f}, L_q={last.l_q:.4f})")
    print(f"checkpoint: {res.checkpoints[-1]}")


def cmd_extract(cfg):
    model = _load_model(cfg)
    examples = _eval_examples(cfg)
    features = ImageFeatureStore(_require(cfg.data.resolve("features_path"), "features_path"))
    path = _write_predictions(Path(cfg.run.out) / "predictions_model.jsonl",
                              extract_dataset(model, examples, features))
    print(f"predictions: {path}")


def cmd_baseline(cfg):
    methods = [m for m in _methods(cfg) if m != "model"]
    if not methods:
        raise ValidationError("baseline needs --methods tfidf and/or embedrank")
    examples = _eval_examples(cfg)
    for m in methods:
        exts = run_tfidf(examples, _idf(cfg)) if m == "tfidf" else run_embedrank(examples, _embeddings(cfg))
        print(f"predictions: {_write_predictions(Path(cfg.run.out) / f'predictions_{m}.jsonl', exts)}")


def cmd_eval(cfg):
    methods = _methods(cfg)
    examples = _eval_examples(cfg)
    runs = {}
    for m in methods:
        if m == "model":
            features = ImageFeatureStore(_require(cfg.data.resolve("features_path"), "features_path"))
            runs["Ours"] = extract_dataset(_load_model(cfg), examples, features)
        elif m == "tfidf":
            runs["TF-IDF"] = run_tfidf(examples, _idf(cfg))
        else:
            runs["EmbedRank"] = run_embedrank(examples, _embeddings(cfg))
    rows = compare_methods(examples, runs, tie=cfg.run.tie)
    _report(cfg, rows)


def _report(cfg, rows):
    print(format_comparison(rows, cfg.run.dataset))
    for row in rows:
        print()
        print(format_per_type(row.reports[0].per_type, title=f"{row.method}: question type"))
    out = Path(cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.jsonl").write_text(comparison_jsonl(rows, cfg.run.dataset), encoding="utf-8")
    (out / "comparison.txt").write_text(format_comparison(rows, cfg.run.dataset) + "\n", encoding="utf-8")


def cmd_ablate(cfg):
    from .training import run_ablation_suite

    try:
        seeds = [int(s) for s in cfg.run.seeds.split(",") if s.strip()]
    except ValueError:
        raise ValidationError(f"run.seeds must be comma-separated integers, got {cfg.run.seeds!r}")
    if cfg.run.seed >= 0:
        seeds = [cfg.run.seed]
    train_ex = load_dataset(_require(cfg.data.resolve("train_path"), "train_path"))
    eval_ex = _eval_examples(cfg)
    features = ImageFeatureStore(_require(cfg.data.resolve("features_path"), "features_path"))
    emb = cfg.data.resolve("embeddings_path") or None
    result = run_ablation_suite(train_ex, eval_ex, features, cfg.model, cfg.train, seeds=seeds,
                                embeddings_path=emb, out_dir=Path(cfg.run.out))
    _report(cfg, result.rows)


def cmd_grad_check(cfg):
    from .gradcheck import standard_battery

    reports = standard_battery(seed=max(cfg.run.seed, 0))
    for r in reports:
        print(r)
    failed = [r.name for r in reports if not r.passed]
    if failed:
        raise StageError("grad-check", f"failed: {', '.join(failed)}")


HANDLERS = {
    "gen-synthetic": cmd_gen_synthetic, "train": cmd_train, "extract": cmd_extract,
    "baseline": cmd_baseline, "eval": cmd_eval, "ablate": cmd_ablate, "grad-check": cmd_grad_check,
}


def dispatch(argv=None):
    """Run one command; returns the process exit code (0 ok, 1 failure, 2 usage)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        try:
            cfg = load_config(args.config, _overrides(args))
            cfg.model.validate()
            cfg.train.validate()
            if args.command == "gen-synthetic":
                cfg.synthetic.validate()
        except KwExtractError as exc:
            raise StageError("config", exc) from exc
        try:
            HANDLERS[args.command](cfg)
        except KwExtractError as exc:
            raise StageError(args.command, exc) from exc
        except OSError as exc:
            raise StageError(args.command, exc) from exc
    except StageError as exc:
        print(f"kwextract: error in stage {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
