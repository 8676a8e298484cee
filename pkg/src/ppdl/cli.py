"""Command-line interface: keygen, encrypt-dataset, train, evaluate, compare, report.

Exit status: 0 success, 1 usage error, 2 I/O or data error, 3 numerical
divergence, 4 accuracy gap above the comparison threshold.

Training options may also come from a config file (``--config``) of
``key = value`` lines whose first line is ``version = 1``; command-line
flags override it.  ``PPDL_OUTPUT_DIR`` sets the default output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from .dataset import MANIFEST_NAME, MODES, SPLITS, DatasetManifest, ingest, materialize, split
from .errors import (
    BadRatios,
    DataError,
    IncomparableReports,
    KeyParseError,
    ModulusTooSmall,
    NumericalDivergence,
    PPDLError,
    WeightsFormatError,
)
from .metrics import (
    ComparisonReport,
    compare,
    confusion,
    dump_evaluation,
    format_confusion,
    format_table,
    load_evaluation,
    report,
)
from .nn import TrainConfig, TrainReport, build_default_net, deserialize_weights, serialize_weights
from .paillier import (
    DEFAULT_CLI_BITS,
    MIN_PRIME_BITS,
    decrypt,
    deserialize_key,
    encrypt_random,
    keygen,
    serialize_key,
)
from .rng import SplitMix64

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC, EXIT_GAP = 0, 1, 2, 3, 4
CONFIG_VERSION = "1"
ENV_OUTPUT_DIR = "PPDL_OUTPUT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _out_dir(args) -> Path:
    d = Path(args.out_dir or os.environ.get(ENV_OUTPUT_DIR) or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _read(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise DataError(f"cannot read file ({e.strerror})", path) from e


def _write(path, data: bytes) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    except OSError as e:
        raise DataError(f"cannot write file ({e.strerror})", path) from e


def _dump_json(obj) -> bytes:
    return (json.dumps(obj, indent=2) + "\n").encode()


# -- config ------------------------------------------------------------------

_TRAIN_KEYS = {f.name: f.type for f in fields(TrainConfig)}


def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines; the first non-comment line must be ``version = 1``."""
    out = {}
    seen_version = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not seen_version:
            if key != "version" or value != CONFIG_VERSION:
                raise UsageError(f"config must start with 'version = {CONFIG_VERSION}'")
            seen_version = True
            continue
        key = key.replace("-", "_")
        if key not in _TRAIN_KEYS:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        out[key] = value
    if not seen_version:
        raise UsageError("config file is empty")
    return out


def _coerce(key: str, value):
    kind = _TRAIN_KEYS[key]
    if kind in ("bool", bool):
        if isinstance(value, bool):
            return value
        if str(value).lower() in ("1", "true", "yes", "on"):
            return True
        if str(value).lower() in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"{key}: expected a boolean, got {value!r}")
    try:
        if kind in ("int", int):
            return int(value)
        if kind in ("float", float):
            return float(value)
    except ValueError:
        raise UsageError(f"{key}: cannot parse {value!r}") from None
    return str(value)


def train_config_from(args) -> TrainConfig:
    values = {}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as e:
            raise DataError(f"cannot read config ({e.strerror})", args.config) from e
        values.update(parse_config(text))
    for key in _TRAIN_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    try:
        return TrainConfig(**{k: _coerce(k, v) for k, v in values.items()})
    except ValueError as e:
        raise UsageError(str(e)) from e


# -- commands ----------------------------------------------------------------


def _self_test(pk, sk, seed: int, trials: int = 100) -> bool:
    rng = SplitMix64.derive("keygen-self-test", pk.fingerprint, seed)
    for _ in range(trials):
        m = rng.randbelow(pk.n)
        if decrypt(sk, pk, encrypt_random(pk, m, rng)) != m:
            return False
    return True


def cmd_keygen(args) -> int:
    if args.bits < MIN_PRIME_BITS:
        raise UsageError(f"--bits must be at least {MIN_PRIME_BITS}")
    seed = args.seed if args.seed is not None else int.from_bytes(os.urandom(8), "little")
    pk, sk = keygen(args.bits, SplitMix64(seed))
    if not _self_test(pk, sk, seed):
        print("generated key failed the encrypt/decrypt self-test", file=sys.stderr)
        return EXIT_NUMERIC
    out = _out_dir(args)
    pub = Path(args.public) if args.public else out / "key.pub"
    priv = Path(args.private) if args.private else out / "key.priv"
    _write(pub, serialize_key(pk))
    _write(priv, serialize_key(pk, sk))
    print(f"fingerprint {pk.fingerprint}")
    print(f"public key  {pub}")
    print(f"private key {priv}")
    return EXIT_OK


def _load_key(path):
    try:
        return deserialize_key(_read(path))
    except KeyParseError as e:
        raise DataError(f"bad key file ({e})", path) from e


def _parse_ratios(text: str):
    try:
        ratios = tuple(float(t) for t in text.split(","))
    except ValueError:
        raise UsageError(f"--ratios must be comma-separated numbers, got {text!r}") from None
    if len(ratios) != 3:
        raise UsageError("--ratios needs exactly three values (train,val,test)")
    return ratios


def format_split_summary(manifest: DatasetManifest) -> str:
    counts = manifest.counts()
    width = max([len("Class")] + [len(c) for c in manifest.classes])
    lines = [f"{'Class':<{width}}  {'Training':>10}  {'Validation':>10}  {'Testing':>10}"]
    for c in manifest.classes:
        row = counts[c]
        lines.append(f"{c:<{width}}  {row['train']:>10}  {row['val']:>10}  {row['test']:>10}")
    return "\n".join(lines)


def cmd_encrypt_dataset(args) -> int:
    ratios = _parse_ratios(args.ratios)
    pk = None
    if args.mode != "plain":
        if not args.key:
            raise UsageError(f"--key is required for {args.mode} mode")
        pk, _ = _load_key(args.key)
    manifest = split(ingest(args.root), ratios, args.split_seed)
    out = _out_dir(args)
    result = materialize(
        manifest, args.root, out, args.mode, pk, args.seed, args.emit_view, args.workers
    )
    print(format_split_summary(result))
    print(f"\nwrote {len(result.entries)} images ({args.mode}) and {out / MANIFEST_NAME}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .training import train

    config = train_config_from(args)
    manifest_path = Path(args.manifest)
    manifest = DatasetManifest.load(manifest_path)
    root = Path(args.root) if args.root else manifest_path.parent
    net = build_default_net(config.input_size, config.channels, len(manifest.classes), config.seed)
    log = None if args.quiet else (lambda msg: print(msg, flush=True))
    try:
        rep = train(net, manifest, root, config, log=log)
    except NumericalDivergence as e:
        print(f"training diverged: {e}; try a lower --learning-rate", file=sys.stderr)
        return EXIT_NUMERIC
    out = _out_dir(args)
    weights = Path(args.weights) if args.weights else out / "weights.bin"
    report_path = Path(args.report) if args.report else out / "train_report.json"
    doc = rep.to_dict()
    doc["classes"] = list(manifest.classes)
    doc["config"] = {f.name: getattr(config, f.name) for f in fields(TrainConfig)}
    _write(weights, serialize_weights(net))
    _write(report_path, _dump_json(doc))
    print(f"best epoch {rep.best_epoch} (val accuracy {rep.val_accuracy[rep.best_epoch - 1]:.4f})")
    print(f"weights {weights}\nreport  {report_path}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .training import predict_split

    try:
        net = deserialize_weights(_read(args.weights))
    except WeightsFormatError as e:
        raise DataError(f"bad weights file ({e})", args.weights) from e
    manifest_path = Path(args.manifest)
    manifest = DatasetManifest.load(manifest_path)
    root = Path(args.root) if args.root else manifest_path.parent
    if net.num_classes != len(manifest.classes):
        raise DataError("weights and manifest disagree on the number of classes", args.weights)
    try:
        true, pred, _ = predict_split(net, manifest, root, args.split)
    except ValueError as e:
        raise DataError(str(e), manifest_path) from e
    cm = confusion(true.tolist(), pred.tolist(), manifest.classes)
    rep = report(cm)
    print(format_table(rep))
    print()
    print(format_confusion(cm))
    out = _out_dir(args)
    path = Path(args.out) if args.out else out / f"evaluation_{args.split}.json"
    _write(path, dump_evaluation(cm, rep, args.split))
    print(f"\nreport {path}")
    return EXIT_OK


def _load_report(path):
    try:
        return load_evaluation(_read(path))[1]
    except (ValueError, KeyError, TypeError) as e:
        raise DataError(f"bad report file ({e})", path) from e


def cmd_compare(args) -> int:
    plain = _load_report(args.plain)
    enc = _load_report(args.encrypted)
    try:
        cmp = compare(plain, enc, args.threshold)
    except IncomparableReports as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    print(cmp.format())
    if args.out:
        _write(args.out, _dump_json(cmp.to_dict()))
    return EXIT_OK if cmp.passed else EXIT_GAP


def cmd_report(args) -> int:
    try:
        doc = json.loads(_read(args.file))
    except ValueError as e:
        raise DataError(f"not a JSON report ({e})", args.file) from e
    fmt = doc.get("format") if isinstance(doc, dict) else None
    if fmt == "ppdl-evaluation":
        cm, rep = load_evaluation(_read(args.file))
        print(f"split: {doc.get('split')}\n")
        print(format_table(rep))
        print()
        print(format_confusion(cm))
    elif fmt == "ppdl-train-report":
        rep = TrainReport.from_dict(doc)
        print(f"{'epoch':>5}  {'loss':>8}  {'train_acc':>9}  {'val_acc':>8}")
        for i, (l, ta, va) in enumerate(zip(rep.train_loss, rep.train_accuracy, rep.val_accuracy), 1):
            mark = "  *" if i == rep.best_epoch else ""
            print(f"{i:>5}  {l:>8.4f}  {ta:>9.4f}  {va:>8.4f}{mark}")
    elif isinstance(doc, dict) and "gap" in doc:
        print(ComparisonReport(**{**doc, "classes": tuple(doc["classes"]), "f1_deltas": tuple(doc["f1_deltas"])}).format())
    else:
        raise DataError("unrecognised report format", args.file)
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synth import write_dataset

    root = write_dataset(args.out, args.per_class, args.size, args.seed, args.noise)
    print(f"wrote {args.per_class} images per class to {root}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ppdl", description="Paillier-encrypted image classification pipeline.")
    p.add_argument("--version", action="version", version=f"ppdl {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def out_dir(sp):
        sp.add_argument("--out-dir", help=f"output directory (default ${ENV_OUTPUT_DIR} or .)")

    k = sub.add_parser("keygen", help="generate a Paillier key pair")
    k.add_argument("--bits", type=int, default=DEFAULT_CLI_BITS, help="bits per prime")
    k.add_argument("--seed", type=int, help="seed for reproducible keys")
    k.add_argument("--public", help="public key path (default OUT/key.pub)")
    k.add_argument("--private", help="private key path (default OUT/key.priv)")
    out_dir(k)
    k.set_defaults(func=cmd_keygen)

    e = sub.add_parser("encrypt-dataset", help="split a dataset and write a plain or encrypted copy")
    e.add_argument("root", help="folder of class folders")
    e.add_argument("--mode", choices=MODES, default="deterministic")
    e.add_argument("--key", help="public key file (encrypted modes)")
    e.add_argument("--ratios", default="0.8,0.1,0.1", help="train,val,test fractions")
    e.add_argument("--split-seed", type=int, default=0)
    e.add_argument("--seed", type=int, default=0, help="substitution-table or randomizer seed")
    e.add_argument("--emit-view", action="store_true", help="randomized mode: also write low-byte PNGs")
    e.add_argument("--workers", type=int, default=1)
    out_dir(e)
    e.set_defaults(func=cmd_encrypt_dataset)

    t = sub.add_parser("train", help="train the classifier on a materialised dataset")
    t.add_argument("--manifest", required=True)
    t.add_argument("--root", help="dataset root (default: manifest directory)")
    t.add_argument("--config", help="key = value config file")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--learning-rate", type=float)
    t.add_argument("--optimizer", choices=("sgd", "sgd_momentum", "adam"))
    t.add_argument("--input-size", type=int)
    t.add_argument("--channels", type=int, choices=(1, 3))
    t.add_argument("--seed", type=int)
    t.add_argument("--weights", help="weights output (default OUT/weights.bin)")
    t.add_argument("--report", help="report output (default OUT/train_report.json)")
    t.add_argument("--quiet", action="store_true")
    out_dir(t)
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("evaluate", help="confusion matrix and per-class scores on one split")
    v.add_argument("--weights", required=True)
    v.add_argument("--manifest", required=True)
    v.add_argument("--root")
    v.add_argument("--split", choices=SPLITS, default="test")
    v.add_argument("--out", help="evaluation output (default OUT/evaluation_<split>.json)")
    out_dir(v)
    v.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("compare", help="accuracy gap between plain and encrypted evaluations")
    c.add_argument("plain")
    c.add_argument("encrypted")
    c.add_argument("--threshold", type=float, default=0.05)
    c.add_argument("--out", help="write the comparison as JSON")
    c.set_defaults(func=cmd_compare)

    r = sub.add_parser("report", help="pretty-print a stored evaluation, training or comparison report")
    r.add_argument("file")
    r.set_defaults(func=cmd_report)

    s = sub.add_parser("synth", help="write the procedural textured-image fixture dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--per-class", type=int, default=400)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--noise", type=float, default=0.05, help="impulse-noise pixel fraction")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, BadRatios) as e:
        print(f"ppdl {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ModulusTooSmall) as e:
        print(f"ppdl {args.command}: error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericalDivergence as e:
        print(f"ppdl {args.command}: error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except PPDLError as e:
        print(f"ppdl {args.command}: error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
