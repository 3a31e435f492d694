"""Command-line entry point: ``cyclelane <command> ...``.

Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.
Diagnostics go to stderr; results go to the files named by flags (or stdout).
"""
from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import bench, frames, matching, network, synth, taxonomy, training
from .errors import ConfigError, CyclelaneError, ValidationError
from .model import ModelConfig

log = logging.getLogger("cyclelane")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("CYCLELANE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"CYCLELANE_THREADS must be an integer, got {env!r}") from None
    return 1


def _read_json(path, what):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"{what} not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: line {exc.lineno}: {exc.msg}") from None


def _require(path, what):
    if not Path(path).is_file():
        raise ValidationError(f"{what} not found: {path}")
    return path


# ---------------------------------------------------------------- pipeline commands

def cmd_taxonomy(args):
    sys.stdout.write(taxonomy.dump_json() + "\n")


def cmd_ingest(args):
    extract = network.load_extract(args.extract)
    rules = network.RuleTable.from_file(args.rules) if args.rules else None
    origin = None
    if args.origin:
        lat, lon = (float(v) for v in args.origin.split(","))
        origin = network.GeoOrigin(lat, lon)
    index = network.build_index(extract, origin, args.cell_size, rules)
    index.save(args.out)
    log.info("indexed %d segments from %d ways", len(index), len(extract.ways))


def cmd_match(args):
    index = network.SegmentIndex.load(args.index)
    traj = matching.read_trajectory(args.trajectory)
    cfg = matching.MatchConfig()
    if args.config:
        cfg = matching.MatchConfig.from_dict(_read_json(args.config, "match config"))
    overrides = {k: getattr(args, k) for k in ("time_window", "max_distance", "max_angle")
                 if getattr(args, k) is not None}
    if overrides:
        cfg = replace(cfg, **overrides)
    coords = matching.classify_trajectory(traj, index, cfg)
    matching.write_labeled(args.out, coords)
    log.info("matched %d points, %d labeled", len(coords), sum(c.sub_class is not None for c in coords))


def cmd_label_frames(args):
    coords = matching.read_labeled(args.coords)
    stamps = frames.read_frames(args.frames)
    labels = frames.label_frames(coords, stamps)
    if args.overrides:
        labels = frames.apply_overrides(labels, frames.read_overrides(args.overrides))
    frames.write_labels(args.out, labels)


# ---------------------------------------------------------------- model commands

def load_dataset(path) -> training.SequenceDataset:
    """A dataset file written by ``bench generate`` (feature-cache format)."""
    return training.read_cache(_require(path, "dataset"))


def load_manifest(path) -> training.SequenceDataset:
    """Build fixed-length training sequences from a manifest.

    Either ``{"dataset": <cache file>}`` or::

        {"sequence_length": 50, "spacing": 1.0, "frame_rate": 1.0,
         "videos": [{"id": ..., "features": <.npy>, "labels": <labels csv>}]}

    Each video's feature rows are indexed by frame; every ``spacing * frame_rate``
    -th frame is kept and the result is cut into sequences, the last one padded
    with blank unlabeled steps.
    """
    doc = _read_json(path, "manifest")
    base = Path(path).parent
    if "dataset" in doc:
        return load_dataset(base / doc["dataset"])
    n = int(doc.get("sequence_length", 50))
    stride = max(1, int(round(float(doc.get("spacing", 1.0)) * float(doc.get("frame_rate", 1.0)))))
    feats, subs, confs, ids = [], [], [], []
    for v in doc.get("videos", []):
        x = np.load(_require(base / v["features"], "features file")).astype(np.float32)
        labels = frames.read_labels(base / v["labels"])
        sub = np.full(len(x), -1)
        conf = np.zeros(len(x), dtype=np.float32)
        for lab in labels:
            if 0 <= lab.frame_index < len(x) and lab.sub_class is not None:
                sub[lab.frame_index] = int(lab.sub_class)
                conf[lab.frame_index] = lab.confidence
        x, sub, conf = x[::stride], sub[::stride], conf[::stride]
        for k in range(0, len(x), n):
            chunk = slice(k, k + n)
            pad = n - len(x[chunk])
            feats.append(np.pad(x[chunk], ((0, pad), (0, 0))))
            subs.append(np.pad(sub[chunk], (0, pad), constant_values=-1))
            confs.append(np.pad(conf[chunk], (0, pad)))
            ids.append(f"{v.get('id', len(ids))}:{k // n}")
    if not feats:
        raise ValidationError(f"{path}: manifest lists no data")
    return training.SequenceDataset(np.stack(feats), np.stack(subs), np.stack(confs), ids=ids)


def _train_config(args) -> tuple[training.TrainConfig, dict]:
    doc = _read_json(args.config, "train config") if args.config else {}
    model_doc = doc.pop("model", {}) if isinstance(doc, dict) else {}
    train_doc = doc.pop("train", doc) if isinstance(doc, dict) else {}
    cfg = training.TrainConfig.from_dict(train_doc)
    flags = {"seed": args.seed, "epochs": args.epochs, "learning_rate": args.lr}
    cfg = replace(cfg, **{k: v for k, v in flags.items() if v is not None})
    if args.causal:
        cfg = replace(cfg, causal_mask=True)
    return cfg, model_doc


def cmd_train(args):
    data = load_manifest(args.manifest)
    cfg, model_doc = _train_config(args)
    model_cfg = ModelConfig(**{"n_features": data.n_features, **model_doc})
    phase1 = None
    if args.phase in ("1", "both"):
        phase1 = training.train_phase1(data, cfg, model_cfg).checkpoint
        if args.phase == "1":
            training.save_checkpoint(args.out, phase1)
            return
        if args.out_phase1:
            training.save_checkpoint(args.out_phase1, phase1)
    else:
        if not args.init:
            raise ValidationError("--phase 2 needs --init <phase-1 checkpoint>")
        phase1 = training.load_checkpoint(args.init)
    # temporal training reads the cache, never the live features
    if args.cache:
        training.cache_features(data, args.cache, phase1.model.latent)
        cached = training.read_cache(args.cache, phase1.model.n_features, phase1.model.latent)
    else:
        buf = io.BytesIO()
        training.cache_features(data, buf, phase1.model.latent)
        buf.seek(0)
        cached = training.read_cache(buf, phase1.model.n_features, phase1.model.latent)
    phase2 = training.train_phase2(cached, cfg, init=phase1).checkpoint
    training.save_checkpoint(args.out, phase2)


def cmd_predict(args):
    ckpt = training.load_checkpoint(args.checkpoint)
    path = _require(args.features, "features file")
    if str(path).endswith(".npy"):
        x = np.load(path).astype(np.float32)
        data = training.SequenceDataset(x[None], np.full((1, len(x)), -1), np.zeros((1, len(x))))
    else:
        data = load_dataset(path)
    main, sub, pm, ps = bench.predict_steps(ckpt, data, args.protocol)
    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    try:
        out.write("step,main_class,sub_class,main_prob,sub_prob\n")
        for step, (m, s, a, b) in enumerate(zip(main.ravel(), sub.ravel(), pm.ravel(), ps.ravel())):
            out.write(f"{step},{taxonomy.MainClass(int(m)).label},{taxonomy.SubClass(int(s)).label},"
                      f"{a:.6f},{b:.6f}\n")
    finally:
        if out is not sys.stdout:
            out.close()


# ---------------------------------------------------------------- bench commands

def _synth_config(args) -> synth.SynthConfig:
    doc = _read_json(args.config, "synthetic config") if args.config else {}
    flags = {"signal_rate": args.signal_rate, "noise_std": args.noise_std,
             "n_features": args.features, "seq_len": args.seq_len}
    doc.update({k: v for k, v in flags.items() if v is not None})
    doc["seed"] = args.seed
    return synth.SynthConfig(**doc)


def cmd_bench_generate(args):
    data = synth.generate_dataset(_synth_config(args), args.count)
    training.write_cache(args.out, data)


def cmd_bench_evaluate(args):
    ckpt = training.load_checkpoint(args.checkpoint)
    data = load_dataset(args.dataset)
    if args.blackout:
        data = synth.apply_blackout(data, args.blackout, args.seed)
    report = bench.evaluate(ckpt, data, args.protocol)
    bench.write_report(args.out, report)


def cmd_bench_blackout(args):
    ckpts = [training.load_checkpoint(p) for p in args.checkpoints]
    data = load_dataset(args.dataset)
    curve = bench.blackout_sweep(ckpts, data, passes=args.passes, seed=args.seed, threads=_threads(args))
    bench.write_curve(args.out, curve)


def cmd_bench_rank(args):
    ckpt = training.load_checkpoint(args.checkpoint)
    videos = [(Path(p).stem, load_dataset(p)) for p in args.videos]
    ranking = bench.rank_videos(ckpt, videos)
    bench.write_worklist(args.out, ranking, args.worst)


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="cyclelane", description="Cycling-infrastructure labeling and classification pipeline.")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging to stderr")
    ap.add_argument("--threads", type=int, help="worker cap (default: $CYCLELANE_THREADS or 1)")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    tx = sub.add_parser("taxonomy", help="class scheme")
    txs = tx.add_subparsers(dest="action", required=True, parser_class=_Parser)
    txs.add_parser("dump", help="print the class scheme as JSON").set_defaults(func=cmd_taxonomy)

    p = sub.add_parser("ingest", help="classify a road-network extract and build the segment index")
    p.add_argument("--extract", required=True, help="GeoJSON FeatureCollection of LineStrings")
    p.add_argument("--rules", help="JSON rule table replacing the built-in one")
    p.add_argument("--out", required=True, help="index file to write")
    p.add_argument("--cell-size", type=float, default=network.DEFAULT_CELL_SIZE, help="grid cell size in meters")
    p.add_argument("--origin", help="projection origin as LAT,LON (default: extract centroid)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("match", help="label trajectory GPS points from the index")
    p.add_argument("--index", required=True)
    p.add_argument("--trajectory", required=True, help="CSV timestamp,lat,lon")
    p.add_argument("--config", help="JSON match config")
    p.add_argument("--out", required=True)
    p.add_argument("--time-window", type=float)
    p.add_argument("--max-distance", type=float)
    p.add_argument("--max-angle", type=float)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("label-frames", help="interpolate labeled coordinates onto video frames")
    p.add_argument("--coords", required=True, help="output of 'match'")
    p.add_argument("--frames", required=True, help="CSV frame_index,timestamp")
    p.add_argument("--overrides", help="JSON manual override list")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_label_frames)

    p = sub.add_parser("train", help="train the classifier")
    p.add_argument("--manifest", required=True)
    p.add_argument("--phase", choices=["1", "2", "both"], default="both")
    p.add_argument("--config", help="JSON with optional 'model' and 'train' sections")
    p.add_argument("--out", required=True, help="checkpoint to write")
    p.add_argument("--out-phase1", help="also keep the phase-1 checkpoint (phase both)")
    p.add_argument("--init", help="phase-1 checkpoint (phase 2)")
    p.add_argument("--cache", help="write the feature cache here instead of keeping it in memory")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--causal", action="store_true", help="mask attention to current and past steps")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="per-step predictions from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", required=True, help=".npy (steps x features) or a dataset file")
    p.add_argument("--protocol", choices=bench.PROTOCOLS)
    p.add_argument("--out", required=True, help="CSV path, or - for stdout")
    p.set_defaults(func=cmd_predict)

    b = sub.add_parser("bench", help="synthetic benchmark tools")
    bs = b.add_subparsers(dest="action", required=True, parser_class=_Parser)

    p = bs.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--config", help="JSON synthetic config")
    p.add_argument("--signal-rate", type=float)
    p.add_argument("--noise-std", type=float)
    p.add_argument("--features", type=int)
    p.add_argument("--seq-len", type=int)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_bench_generate)

    p = bs.add_parser("evaluate", help="accuracy report for one checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--protocol", choices=bench.PROTOCOLS)
    p.add_argument("--blackout", type=float, default=0.0, help="blackout probability")
    p.add_argument("--out", required=True, help="report JSON")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_bench_evaluate)

    p = bs.add_parser("blackout", help="accuracy vs blackout probability")
    p.add_argument("--checkpoints", nargs="+", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--passes", type=int, default=2)
    p.add_argument("--out", required=True, help="curve CSV")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_bench_blackout)

    p = bs.add_parser("rank", help="rank videos worst-first for manual review")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--videos", nargs="+", required=True, help="one dataset file per video")
    p.add_argument("--worst", type=int, help="keep only the K worst")
    p.add_argument("--out", required=True, help="worklist CSV")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_bench_rank)
    return ap


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return exc.code or 0
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CyclelaneError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())
