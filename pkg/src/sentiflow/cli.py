"""Command-line entry point: gen-corpus, train, generate, evaluate, gradcheck.

Options can also come from a flat ``key = value`` file passed with
``--config``; keys are the long flag names with underscores. Flags override
the file, which overrides built-in defaults. Every effective value is logged
before the command runs.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .cells import ModelConfig, SentimentLabel, Variant
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import build_vocab, encode_corpus, read_corpus, read_lexicon, write_corpus, write_lexicon
from .decode import beam_search, generate_with_flip, greedy_decode
from .evaluation import evaluate
from .gradcheck import run_gradcheck
from .model import CaptionModel
from .synthetic import SyntheticCorpusSpec, generate_synthetic
from .train import TrainConfig, TrainingError, train

log = logging.getLogger("sentiflow")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class RuntimeFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# Each option: flag key -> (type, default). Types double as parsers for the config file.
def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text):
    if text is None or str(text).strip().lower() in ("none", ""):
        return None
    return float(text)


OPTIONS = {
    "gen-corpus": {
        "out": (str, "data"),
        "spec": (str, None),
        "seed": (int, None),
    },
    "train": {
        "data": (str, "data"),
        "variant": (str, "direct"),
        "out": (str, "model.ckpt"),
        "log": (str, None),
        "learning_rate": (float, 0.001),
        "batch_size": (int, 16),
        "epochs": (int, 60),
        "lam": (float, 1.0),
        "seed": (int, 0),
        "clip_norm": (_optional_float, 5.0),
        "embed_dim": (int, 32),
        "hidden_dim": (int, 64),
        "sentiment_embed_dim": (int, 16),
        "min_count": (int, 1),
    },
    "generate": {
        "checkpoint": (str, "model.ckpt"),
        "label": (str, "pos"),
        "record": (str, None),
        "data": (str, None),
        "feature_file": (str, None),
        "beam": (int, 5),
        "max_len": (int, 20),
        "greedy": (_bool, False),
        "flip": (_bool, False),
    },
    "evaluate": {
        "checkpoint": (str, "model.ckpt"),
        "test": (str, "data/test.jsonl"),
        "positive": (str, "data/positive.txt"),
        "negative": (str, "data/negative.txt"),
        "out": (str, "report.json"),
        "beam": (int, 5),
        "max_len": (int, 20),
    },
    "gradcheck": {
        "variant": (str, "all"),
        "seed": (int, 0),
        "embed_dim": (int, 8),
        "hidden_dim": (int, 6),
        "vocab_size": (int, 11),
    },
}


ALIASES = {"learning_rate": ["--lr"]}


def read_config_file(path) -> dict[str, str]:
    """Parse a ``key = value`` file, or the JSON header line of a run log."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        try:
            header = json.loads(text.lstrip().splitlines()[0])
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: bad log header: {exc}") from None
        header.pop("command", None)
        return header
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def resolve(command: str, flags: dict, config_path: str | None) -> dict:
    """Effective options: flags over config file over defaults."""
    spec = OPTIONS[command]
    file_values = read_config_file(config_path) if config_path else {}
    unknown = set(file_values) - set(spec)
    if unknown:
        raise UsageError(f"unknown config key(s) for {command}: {', '.join(sorted(unknown))}")
    out = {}
    for key, (typ, default) in spec.items():
        if flags.get(key) is not None:
            value = flags[key]
        elif key in file_values:
            value = file_values[key]
        else:
            value = default
        try:
            out[key] = typ(value) if value is not None else None
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {exc}") from None
    return out


def echo_config(command: str, cfg: dict) -> str:
    line = json.dumps({"command": command, **cfg}, sort_keys=True)
    log.info("config %s", line)
    return line


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sentiflow", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for command, spec in OPTIONS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", help="flat key = value option file")
        for key, (typ, default) in spec.items():
            flags = ["--" + key.replace("_", "-"), *ALIASES.get(key, [])]
            if typ is _bool:
                p.add_argument(*flags, dest=key, action="store_const", const=True, default=None)
            else:
                p.add_argument(*flags, dest=key, default=None, help=f"default: {default}")
    return parser


# ---------------------------------------------------------------------------


def cmd_gen_corpus(cfg: dict) -> int:
    spec_values = {}
    if cfg["spec"]:
        try:
            spec_values = json.loads(Path(cfg["spec"]).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"spec file is not valid JSON: {exc}") from None
        if "scenes" not in spec_values:
            raise UsageError("scenes: spec file has no scene inventory")
    if cfg["seed"] is not None:
        spec_values["seed"] = cfg["seed"]
    try:
        spec = SyntheticCorpusSpec.from_dict(spec_values)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad corpus spec: {exc}") from None
    train_set, val_set, test_set = generate_synthetic(spec)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    for name, recs in (("train", train_set), ("val", val_set), ("test", test_set)):
        n = write_corpus(recs, out / f"{name}.jsonl")
        print(f"{name}: {n} records")
    write_lexicon(spec.positive, out / "positive.txt")
    write_lexicon(spec.negative, out / "negative.txt")
    return EXIT_OK


def cmd_train(cfg: dict) -> int:
    data = Path(cfg["data"])
    try:
        variant = Variant.parse(cfg["variant"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    train_path = data / "train.jsonl" if data.is_dir() else data
    if not train_path.exists():
        raise RuntimeFailure(f"training data not found: {train_path}")
    texts = read_corpus(train_path)
    vocab = build_vocab((r.caption for r in texts), cfg["min_count"])
    corpus = encode_corpus(texts, vocab)
    model_cfg = ModelConfig(variant, len(vocab), len(texts[0].feature), cfg["embed_dim"],
                            cfg["hidden_dim"], cfg["sentiment_embed_dim"])
    model = CaptionModel(model_cfg, vocab=vocab, seed=cfg["seed"])
    tcfg = TrainConfig(learning_rate=cfg["learning_rate"], batch_size=cfg["batch_size"],
                       epochs=cfg["epochs"], lam=cfg["lam"], seed=cfg["seed"], variant=variant,
                       clip_norm=cfg["clip_norm"])
    header = echo_config("train", cfg)
    log_path = Path(cfg["log"]) if cfg["log"] else Path(str(cfg["out"]) + ".log")
    t0 = time.time()
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")

        def on_epoch(entry):
            fh.write(entry.to_json() + "\n")
            fh.flush()
            print(f"epoch {entry.epoch:3d}  word {entry.word_loss:.4f}  "
                  f"senti {entry.sentiment_loss:.4f}  total {entry.total:.4f}")

        try:
            train(tcfg, corpus, model, on_epoch)
        except TrainingError as exc:
            raise RuntimeFailure(f"training aborted: {exc}") from None
    save_checkpoint(model, cfg["out"], meta={"run": cfg})
    print(f"saved {variant.value} checkpoint to {cfg['out']} ({time.time() - t0:.1f}s)")
    return EXIT_OK


def _load(path) -> CaptionModel:
    try:
        return load_checkpoint(path)
    except FileNotFoundError:
        raise RuntimeFailure(f"checkpoint not found: {path}") from None
    except CheckpointError as exc:
        raise RuntimeFailure(f"cannot load {path}: {exc}") from None


def _feature(cfg: dict, model: CaptionModel) -> np.ndarray:
    if cfg["feature_file"]:
        text = Path(cfg["feature_file"]).read_text(encoding="utf-8").strip()
        values = json.loads(text) if text.startswith("[") else [float(x) for x in text.split()]
        feat = np.asarray(values, dtype=np.float64)
    elif cfg["record"]:
        if not cfg["data"]:
            raise UsageError("--record needs --data pointing at a dataset file")
        match = [r for r in read_corpus(cfg["data"]) if r.image_id == cfg["record"]]
        if not match:
            raise UsageError(f"record {cfg['record']!r} not found in {cfg['data']}")
        feat = match[0].feature
    else:
        raise UsageError("give either --feature-file or --record with --data")
    if feat.shape != (model.config.feature_dim,):
        raise UsageError(f"feature has {feat.size} values, model expects {model.config.feature_dim}")
    return feat


def cmd_generate(cfg: dict) -> int:
    try:
        label = SentimentLabel.parse(cfg["label"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if cfg["flip"] and label is SentimentLabel.NEU:
        raise UsageError("--flip needs a pos or neg label")
    if cfg["beam"] < 1 or cfg["max_len"] < 1:
        raise UsageError("--beam and --max-len must be at least 1")
    model = _load(cfg["checkpoint"])
    feat = _feature(cfg, model)
    echo_config("generate", cfg)
    vocab = model.vocab
    if cfg["flip"]:
        orig, flipped = generate_with_flip(model, feat, label, cfg["beam"], cfg["max_len"])
        print(f"[{label.value}] {orig.score:.4f}\t{vocab.decode(orig.words)}")
        print(f"[{label.flipped().value}] {flipped.score:.4f}\t{vocab.decode(flipped.words)}")
    elif cfg["greedy"]:
        hyp = greedy_decode(model, feat, label, cfg["max_len"])
        print(f"{hyp.score:.4f}\t{vocab.decode(hyp.words)}")
    else:
        for hyp in beam_search(model, feat, label, cfg["beam"], cfg["max_len"]):
            print(f"{hyp.score:.4f}\t{vocab.decode(hyp.words)}")
    return EXIT_OK


def cmd_evaluate(cfg: dict) -> int:
    model = _load(cfg["checkpoint"])
    try:
        texts = read_corpus(cfg["test"])
        pos, neg = read_lexicon(cfg["positive"]), read_lexicon(cfg["negative"])
    except FileNotFoundError as exc:
        raise RuntimeFailure(f"missing input: {exc.filename}") from None
    if pos & neg:
        raise RuntimeFailure(f"sentiment lexicons overlap: {', '.join(sorted(pos & neg))}")
    echo_config("evaluate", cfg)
    report = evaluate(model, encode_corpus(texts, model.vocab), pos, neg, cfg["beam"], cfg["max_len"])
    Path(cfg["out"]).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
                                encoding="utf-8")
    print(report.metrics_table())
    print()
    print(report.sentiment_table())
    return EXIT_OK


def cmd_gradcheck(cfg: dict) -> int:
    if cfg["variant"] == "all":
        variants = list(Variant)
    else:
        try:
            variants = [Variant.parse(cfg["variant"])]
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    echo_config("gradcheck", cfg)
    ok = True
    for v in variants:
        report = run_gradcheck(v, cfg["seed"], embed_dim=cfg["embed_dim"], hidden_dim=cfg["hidden_dim"],
                               vocab_size=cfg["vocab_size"])
        for line in report.lines():
            print(line)
        ok &= report.passed
    return EXIT_OK if ok else EXIT_RUNTIME


COMMANDS = {
    "gen-corpus": cmd_gen_corpus,
    "train": cmd_train,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        cfg = resolve(args.command, flags, args.config)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"sentiflow {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RuntimeFailure as exc:
        print(f"sentiflow {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError) as exc:
        print(f"sentiflow {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
