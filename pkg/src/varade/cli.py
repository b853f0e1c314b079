"""``varade`` command line: synth | train | score | eval | bench.

Flags may also come from ``--config FILE`` holding flat ``key = value`` lines
(keys are flag names without dashes, ``-`` or ``_`` alike); explicit flags win.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .baselines.iforest import IsoForest, iso_fit
from .baselines.knn import KnnIndex, knn_fit
from .bench import bench_throughput
from .checkpoint import CheckpointError, load_checkpoint, model_kind, save_checkpoint
from .data import DataError, LabeledStream, Normalizer, default_schema, load_csv, read_csv, write_csv
from .detector import PointDetector, VaradeDetector, detect_stream
from .evaluation import UndefinedAUCError, evaluate
from .model import ConfigError, VaradeConfig, VaradeModel, build, forward, parameter_count
from .optim import NonFiniteGradientError
from .synth import GenerationError, SynthConfig, synth_generate
from .training import TrainConfig, evaluate_loss, train

log = logging.getLogger("varade")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config_file(path: str) -> dict[str, str]:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read config file {path}: {e.strerror}") from None
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="varade", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="flat key=value file of flag defaults")
        sp.add_argument("--json", action="store_true", help="print a single-line JSON report")

    s = sub.add_parser("synth", help="generate a synthetic labeled sensor stream")
    common(s)
    s.add_argument("--out", "-o", required=True)
    s.add_argument("--cycles", type=int, default=30)
    s.add_argument("--sample-rate", type=float, default=200.0)
    s.add_argument("--anomalies", type=int, default=0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--program-seed", type=int, default=0)

    t = sub.add_parser("train", help="fit a detector and write a checkpoint")
    common(t)
    t.add_argument("--data", required=True)
    t.add_argument("--checkpoint", required=True)
    t.add_argument("--model", choices=("varade", "knn", "iforest"), default="varade")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--window", type=int, default=512)
    t.add_argument("--base-maps", type=int, default=128)
    t.add_argument("--kl-weight", type=float, default=1.0)
    t.add_argument("--logvar-min", type=float, default=-10.0)
    t.add_argument("--logvar-max", type=float, default=10.0)
    t.add_argument("--steps", type=int, default=2000)
    t.add_argument("--batch-size", type=int, default=64)
    t.add_argument("--lr", type=float, default=1e-5)
    t.add_argument("--k", type=int, default=5, help="kNN neighbours")
    t.add_argument("--knn-stride", type=int, default=1, help="keep every n-th training sample for kNN")
    t.add_argument("--trees", type=int, default=100)
    t.add_argument("--subsample", type=int, default=256)
    t.add_argument("--contamination", type=float, default=0.1)

    sc = sub.add_parser("score", help="score a stream (file or '-' for stdin)")
    common(sc)
    sc.add_argument("--checkpoint", required=True)
    sc.add_argument("--data", default="-")
    sc.add_argument("--out", "-o", default="-")
    sc.add_argument("--with-labels", action="store_true", help="append the input label column")
    sc.add_argument("--live", action="store_true", help="score record by record even for files")
    sc.add_argument("--max-pending", type=int, default=None, help="drop-oldest queue bound in live mode")

    e = sub.add_parser("eval", help="AUC-ROC of a scored stream")
    common(e)
    e.add_argument("--scores", required=True, help="timestamp,score[,label] file")
    e.add_argument("--labels", help="labeled data CSV, joined on timestamp")

    b = sub.add_parser("bench", help="measure inference frequency")
    common(b)
    b.add_argument("--checkpoint", required=True)
    b.add_argument("--iterations", type=int, default=100)
    b.add_argument("--warmup", type=int, default=10)
    b.add_argument("--threads", type=int, default=1)
    b.add_argument("--seed", type=int, default=0)
    return p


def _config_path(argv: list[str]) -> str | None:
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if a.startswith("--config="):
            return a.split("=", 1)[1]
    return None


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    commands = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in commands), None)
    path = _config_path(argv)
    if path and command:
        # file values become defaults, so explicit flags still win
        subparser = commands[command]
        known = {a.dest: a for a in subparser._actions}
        defaults = {}
        for key, raw in _config_file(path).items():
            if key not in known or key in ("config", "help"):
                raise UsageError(f"unknown config key '{key}' for {command}")
            action = known[key]
            if isinstance(action, argparse._StoreTrueAction):
                defaults[key] = raw.lower() in ("1", "true", "yes", "on")
            else:
                try:
                    defaults[key] = action.type(raw) if action.type else raw
                except ValueError:
                    raise UsageError(f"bad value for config key '{key}': {raw!r}") from None
                if action.choices and defaults[key] not in action.choices:
                    raise UsageError(f"config key '{key}' must be one of {sorted(action.choices)}")
            if action.required:
                action.required = False
        subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def _emit(args, text: str, record: dict) -> None:
    if args.json:
        print(json.dumps(record, sort_keys=True, separators=(",", ":")))
    else:
        print(text)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        cycles=args.cycles,
        sample_rate=args.sample_rate,
        anomalies=args.anomalies,
        seed=args.seed,
        program_seed=args.program_seed,
    )
    stream = synth_generate(cfg)
    write_csv(stream, args.out)
    rec = {
        "samples": len(stream),
        "channels": stream.n_channels,
        "bursts": len(stream.meta["bursts"]),
        "label_fraction": stream.meta["label_fraction"],
        "duration_s": stream.meta["duration_s"],
    }
    _emit(args, f"wrote {args.out}: " + ", ".join(f"{k}={v}" for k, v in rec.items()), rec)
    return EXIT_OK


def cmd_train(args) -> int:
    stream = load_csv(args.data, default_schema() if _looks_default(args.data) else None)
    if stream.labels.any():
        log.warning("training data has %d anomaly-labelled rows; labels are ignored", int(stream.labels.sum()))
    norm = Normalizer.fit(stream.values)
    x = norm.apply(stream.values)
    rec: dict = {"model": args.model, "samples": len(stream), "channels": stream.n_channels}
    if args.model == "varade":
        cfg = VaradeConfig(
            window=args.window,
            channels=stream.n_channels,
            base_maps=args.base_maps,
            kl_weight=args.kl_weight,
            logvar_clamp=(args.logvar_min, args.logvar_max),
        )
        model = build(cfg, seed=args.seed)
        if args.steps > 0:
            before = evaluate_loss(model, x)
            tcfg = TrainConfig(steps=args.steps, batch_size=args.batch_size, lr=args.lr, seed=args.seed)
            train(model, x, tcfg)
            after = evaluate_loss(model, x)
            rec.update({f"initial_{k}": v for k, v in before.items()})
            rec.update({f"final_{k}": v for k, v in after.items()})
        rec.update(steps=args.steps, parameters=parameter_count(model))
        text = f"trained varade ({rec['parameters']} parameters, {args.steps} steps)"
        if args.steps > 0:
            text += "\nfinal loss: " + " ".join(f"{k}={rec['final_' + k]:.6f}" for k in ("recon", "kl", "total"))
    elif args.model == "knn":
        model = knn_fit(x[:: args.knn_stride], k=args.k)
        rec.update(k=args.k, stored=len(model.points))
        text = f"fitted knn (k={args.k}, {len(model.points)} stored points)"
    else:
        model = iso_fit(x, seed=args.seed, n_trees=args.trees, subsample=args.subsample, contamination=args.contamination)
        rec.update(trees=len(model.trees), threshold=model.threshold)
        text = f"fitted isolation forest ({len(model.trees)} trees, threshold {model.threshold:.6f})"
    save_checkpoint(args.checkpoint, model, norm)
    rec["checkpoint"] = args.checkpoint
    _emit(args, text + f"\nwrote {args.checkpoint}", rec)
    return EXIT_OK


def _looks_default(path: str) -> bool:
    # header-driven: use the 86-channel schema only when the file carries exactly it
    try:
        with open(path) as fh:
            header = fh.readline().strip().split(",")
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror}") from None
    names = [h for h in header[1:] if h != "label"]
    return sorted(names) == sorted(default_schema().names)


def _detector(model, norm):
    if isinstance(model, VaradeModel):
        return VaradeDetector(model, norm)
    return PointDetector(model, norm)


def _check_channels(expected: int, got: int) -> None:
    if expected != got:
        raise DataError(f"channel-count mismatch: checkpoint expects {expected} channels, data has {got}")


def cmd_score(args) -> int:
    model, norm = load_checkpoint(args.checkpoint)
    det = _detector(model, norm)
    out = sys.stdout if args.out == "-" else open(args.out, "w")
    try:
        if args.data == "-" or args.live:
            return _score_live(args, det, out)
        stream = load_csv(args.data)
        _check_channels(det.n_channels, stream.n_channels)
        if stream.schema.names != default_schema().names and sorted(stream.schema.names) == sorted(default_schema().names):
            stream = load_csv(args.data, default_schema())
        scores = det.score_array(stream.values)
        first = det.warmup
        ts = stream.timestamps[first:]
        labels = stream.labels[first:]
        lines = []
        for i in range(len(scores)):
            line = f"{ts[i]:.6f},{scores[i]:.9g}"
            if args.with_labels:
                line += f",{int(labels[i])}"
            lines.append(line)
        if lines:
            out.write("\n".join(lines) + "\n")
        log.info("scored %d of %d samples", len(scores), len(stream))
        return EXIT_OK
    finally:
        if out is not sys.stdout:
            out.close()


def _score_live(args, det, out) -> int:
    src = sys.stdin if args.data == "-" else open(args.data)
    try:
        lines = iter(src)
        first = next(lines, "")
        if first.startswith("timestamp"):
            header = first.strip().split(",")
            n_ch = len([h for h in header[1:] if h != "label"])
            _check_channels(det.n_channels, n_ch)
        else:
            n_fields = len(first.strip().split(",")) if first.strip() else 0
            if n_fields and n_fields - 1 not in (det.n_channels, det.n_channels + 1) and n_fields - 2 != det.n_channels:
                _check_channels(det.n_channels, n_fields - 1)
            lines = _chain(first, lines)

        def sink(point):
            line = f"{point.timestamp:.6f},{point.score:.9g}"
            if args.with_labels and point.label is not None:
                line += f",{point.label}"
            out.write(line + "\n")
            out.flush()

        stats = detect_stream(det, lines, sink, max_pending=args.max_pending)
        log.info(
            "received %d, scored %d, malformed %d, dropped %d",
            stats.received,
            stats.scored,
            stats.malformed,
            stats.dropped,
        )
        if stats.malformed or stats.dropped:
            print(f"malformed={stats.malformed} dropped={stats.dropped}", file=sys.stderr)
        return EXIT_OK
    finally:
        if src is not sys.stdin:
            src.close()


def _chain(first, rest):
    if first:
        yield first
    yield from rest


def _read_scores(path: str):
    try:
        table = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as e:
        raise DataError(f"cannot read scores from {path}: {e}") from None
    if table.size == 0:
        raise DataError(f"{path}: no scores")
    if table.shape[1] not in (2, 3):
        raise DataError(f"{path}: expected timestamp,score[,label] rows")
    return table


def cmd_eval(args) -> int:
    table = _read_scores(args.scores)
    ts, scores = table[:, 0], table[:, 1]
    if args.labels:
        data = load_csv(args.labels)
        pos = np.searchsorted(data.timestamps, ts)
        pos = np.clip(pos, 0, len(data) - 1)
        ok = np.isclose(data.timestamps[pos], ts, rtol=0, atol=5e-7)
        if not ok.all():
            raise DataError(f"{int((~ok).sum())} scored timestamps have no matching labeled sample")
        labels = data.labels[pos]
    elif table.shape[1] == 3:
        labels = table[:, 2]
    else:
        raise UsageError("labels needed: score with --with-labels or pass --labels DATA.csv")
    report = evaluate(scores, labels)
    _emit(args, report.to_text(), report.to_record())
    return EXIT_OK


def cmd_bench(args) -> int:
    model, norm = load_checkpoint(args.checkpoint)
    rng = np.random.default_rng(args.seed)
    kind = model_kind(model)
    c = norm.n_channels
    if isinstance(model, VaradeModel):
        t = model.config.window
        inputs = [rng.uniform(-1, 1, (c, t)).astype(np.float32) for _ in range(8)]

        def infer(x):
            return forward(model, x)

    else:
        det = PointDetector(model, Normalizer(np.full(c, -1.0), np.full(c, 1.0)))
        inputs = [rng.uniform(-1, 1, (1, c)) for _ in range(8)]

        def infer(x):
            return det.score_array(x)

    report = bench_throughput(infer, inputs, args.iterations, args.warmup, threads=args.threads)
    rec = {"model": kind, **report.to_record()}
    _emit(args, f"model: {kind}\n" + report.to_text(), rec)
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "score": cmd_score, "eval": cmd_eval, "bench": cmd_bench}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as e:
        print(f"varade: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as e:
        print(f"varade: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (NonFiniteGradientError, FloatingPointError) as e:
        print(f"varade: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, CheckpointError, GenerationError, UndefinedAUCError, ValueError) as e:
        print(f"varade: error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
