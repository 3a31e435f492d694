"""Evaluation harness: windowed prediction protocols, metrics, blackout sweep, video ranking."""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import HarnessError
from .synth import apply_blackout
from .taxonomy import N_MAIN, N_SUB, SUB_TO_MAIN, MainClass, SubClass
from .training import Checkpoint, SequenceDataset

PROTOCOLS = ("proposed", "no_future", "no_temporal")
WINDOW = 50
STRIDE = 10
BLACKOUT_PROBS = tuple(round(0.05 * i, 2) for i in range(21))

_SUB_TO_MAIN = np.array(SUB_TO_MAIN)


def protocol_for(ckpt: Checkpoint) -> str:
    if not ckpt.temporal:
        return "no_temporal"
    return "no_future" if ckpt.causal else "proposed"


def window_plan(length, window=WINDOW, stride=STRIDE, protocol="proposed"):
    """Window start offsets and the in-window positions whose outputs are kept.

    Window ``k`` records the ``stride`` outputs for sequence steps
    ``k*stride .. k*stride+stride-1``. The proposed protocol keeps the centre of
    the window, ``no_future`` keeps the most recent steps. Returns a list of
    ``(start, first_recorded_position)``; window positions may fall outside the
    sequence and are padded by the caller.
    """
    if protocol == "proposed":
        lead = (window - stride) // 2
    elif protocol == "no_future":
        lead = window - stride
    else:
        raise HarnessError(f"windowing undefined for protocol {protocol!r}")
    n_windows = math.ceil(length / stride)
    return [(k * stride - lead, lead) for k in range(n_windows)]


def predict_steps(ckpt: Checkpoint, data: SequenceDataset, protocol=None,
                  window=WINDOW, stride=STRIDE, blank=None):
    """Predicted ids and probabilities for every step of every sequence.

    Returns ``(main, sub, main_prob, sub_prob)``, each shaped (S, L).
    """
    protocol = protocol or protocol_for(ckpt)
    if protocol not in PROTOCOLS:
        raise HarnessError(f"unknown protocol {protocol!r}")
    if protocol == "no_temporal" and ckpt.temporal:
        raise HarnessError("no_temporal protocol needs a phase-1 checkpoint")
    if protocol != "no_temporal" and not ckpt.temporal:
        raise HarnessError(f"{protocol} protocol needs a temporal checkpoint")
    if protocol == "no_future" and not ckpt.causal:
        raise HarnessError("no_future protocol needs a causally masked checkpoint")
    S, L, F = data.features.shape
    if protocol == "no_temporal":
        pred = ckpt.predict(data.features.reshape(-1, 1, F))
        return (pred.main_argmax.reshape(S, L), pred.sub_argmax.reshape(S, L),
                pred.main_probs.max(axis=-1).reshape(S, L), pred.sub_probs.max(axis=-1).reshape(S, L))

    blank = np.zeros(F, dtype=np.float32) if blank is None else np.asarray(blank, np.float32)
    plan = window_plan(L, window, stride, protocol)
    # pad each sequence so every window is a plain slice
    lo = max(0, -min(s for s, _ in plan))
    hi = max(0, max(s for s, _ in plan) + window - L)
    padded = np.empty((S, lo + L + hi, F), dtype=np.float32)
    padded[:] = blank
    padded[:, lo:lo + L] = data.features
    wins = np.stack([padded[:, s + lo:s + lo + window] for s, _ in plan], axis=1)
    pred = ckpt.predict(wins.reshape(-1, window, F))
    found = [pred.main_argmax, pred.sub_argmax, pred.main_probs.max(axis=-1), pred.sub_probs.max(axis=-1)]
    outs = []
    for arr in found:
        arr = arr.reshape(S, len(plan), window)
        out = np.empty((S, L), dtype=arr.dtype)
        for k, (start, first) in enumerate(plan):
            steps = np.arange(start + first, start + first + stride)
            ok = steps < L
            out[:, steps[ok]] = arr[:, k, first:first + stride][:, ok]
        outs.append(out)
    return tuple(outs)


def confusion_matrix(true, pred, n):
    cm = np.zeros((n, n), dtype=np.int64)
    np.add.at(cm, (np.asarray(true).ravel(), np.asarray(pred).ravel()), 1)
    return cm


def normalize_rows(cm):
    """Row-normalized confusion matrix; rows without samples stay zero."""
    cm = np.asarray(cm, dtype=float)
    rows = cm.sum(axis=1, keepdims=True)
    return np.divide(cm, rows, out=np.zeros_like(cm), where=rows > 0)


def per_class_accuracy(cm):
    """Recall per true class; NaN where the class has no samples."""
    cm = np.asarray(cm, dtype=float)
    rows = cm.sum(axis=1)
    acc = np.full(len(cm), np.nan)
    np.divide(np.diag(cm), rows, out=acc, where=rows > 0)
    return acc


def macro_accuracy(cm) -> float:
    acc = per_class_accuracy(cm)
    present = ~np.isnan(acc)
    if not present.any():
        raise HarnessError("no labeled samples to score")
    return float(acc[present].mean())


@dataclass
class EvalReport:
    protocol: str
    sub_per_class: np.ndarray
    main_per_class: np.ndarray
    main_macro: float
    sub_macro: float
    main_micro: float
    sub_micro: float
    main_confusion: np.ndarray
    sub_confusion: np.ndarray
    main_counts: np.ndarray
    sub_counts: np.ndarray
    per_video: list

    def to_dict(self) -> dict:
        def vec(a):
            return [None if np.isnan(v) else float(v) for v in a]

        return {
            "protocol": self.protocol,
            "main_macro_accuracy": self.main_macro,
            "sub_macro_accuracy": self.sub_macro,
            "main_micro_accuracy": self.main_micro,
            "sub_micro_accuracy": self.sub_micro,
            "main_per_class": {m.label: a for m, a in zip(MainClass, vec(self.main_per_class))},
            "sub_per_class": {s.label: a for s, a in zip(SubClass, vec(self.sub_per_class))},
            "main_confusion": normalize_rows(self.main_confusion).tolist(),
            "sub_confusion": normalize_rows(self.sub_confusion).tolist(),
            "empty_main_rows": [m.label for m in MainClass if self.main_counts[m] == 0],
            "empty_sub_rows": [s.label for s in SubClass if self.sub_counts[s] == 0],
            "per_video": [{"video_id": v, "accuracy": a} for v, a in self.per_video],
        }


def score(data: SequenceDataset, pred_main, pred_sub, protocol="proposed") -> EvalReport:
    labeled = data.sub >= 0
    if not labeled.any():
        raise HarnessError("dataset has no labeled steps")
    ts = data.sub[labeled]
    tm = _SUB_TO_MAIN[ts]
    cm_main = confusion_matrix(tm, pred_main[labeled], N_MAIN)
    cm_sub = confusion_matrix(ts, pred_sub[labeled], N_SUB)
    per_video = []
    for i, vid in enumerate(data.ids):
        m = labeled[i]
        if m.any():
            per_video.append((vid, float((pred_sub[i][m] == data.sub[i][m]).mean())))
    return EvalReport(
        protocol=protocol,
        sub_per_class=per_class_accuracy(cm_sub),
        main_per_class=per_class_accuracy(cm_main),
        main_macro=macro_accuracy(cm_main),
        sub_macro=macro_accuracy(cm_sub),
        main_micro=float(np.trace(cm_main) / cm_main.sum()),
        sub_micro=float(np.trace(cm_sub) / cm_sub.sum()),
        main_confusion=cm_main,
        sub_confusion=cm_sub,
        main_counts=cm_main.sum(axis=1),
        sub_counts=cm_sub.sum(axis=1),
        per_video=per_video,
    )


def evaluate(ckpt: Checkpoint, data: SequenceDataset, protocol=None, window=WINDOW,
             stride=STRIDE) -> EvalReport:
    protocol = protocol or protocol_for(ckpt)
    pm, ps, _, _ = predict_steps(ckpt, data, protocol, window, stride)
    return score(data, pm, ps, protocol)


@dataclass
class CurvePoint:
    p: float
    mean: float
    min: float
    max: float
    values: list


def blackout_sweep(checkpoints, data: SequenceDataset, passes=2, seed=0,
                   probs=BLACKOUT_PROBS, threads=1) -> list[CurvePoint]:
    """Sub-class macro accuracy vs blackout probability.

    Every checkpoint is evaluated ``passes`` times per probability, each pass
    with its own blackout mask, giving ``len(checkpoints) * passes`` values per
    point.
    """
    checkpoints = list(checkpoints)
    if not checkpoints or any(c is None for c in checkpoints):
        raise HarnessError("blackout sweep needs every checkpoint")

    def one(job):
        ip, ic, k = job
        ss = np.random.SeedSequence([seed, ip, ic, k])
        blacked = apply_blackout(data, probs[ip], np.random.default_rng(ss))
        return evaluate(checkpoints[ic], blacked).sub_macro

    jobs = [(ip, ic, k) for ip in range(len(probs)) for ic in range(len(checkpoints)) for k in range(passes)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            accs = list(pool.map(one, jobs))
    else:
        accs = [one(j) for j in jobs]
    per = len(checkpoints) * passes
    curve = []
    for ip, p in enumerate(probs):
        vals = accs[ip * per:(ip + 1) * per]
        lo, hi = float(min(vals)), float(max(vals))
        # clamp: the rounded mean of equal values can land one ulp outside them
        mean = min(hi, max(lo, math.fsum(vals) / len(vals)))
        curve.append(CurvePoint(float(p), mean, lo, hi, vals))
    return curve


def write_curve(path, curve):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["p", "mean", "min", "max"])
        for pt in curve:
            w.writerow([f"{pt.p:.2f}", f"{pt.mean:.6f}", f"{pt.min:.6f}", f"{pt.max:.6f}"])


def rank_videos(ckpt: Checkpoint, videos, protocol=None) -> list[tuple[str, float]]:
    """Per-video sub-class accuracy, worst first; ties broken by video id.

    ``videos`` maps a video id to a SequenceDataset (or is a list of such pairs).
    """
    items = list(videos.items()) if isinstance(videos, dict) else list(videos)
    if not items:
        raise HarnessError("no videos to rank")
    scored = []
    for vid, data in items:
        _, ps, _, _ = predict_steps(ckpt, data, protocol)
        labeled = data.sub >= 0
        acc = float((ps[labeled] == data.sub[labeled]).mean()) if labeled.any() else float("nan")
        scored.append((str(vid), acc))
    return sorted(scored, key=lambda t: (math.isnan(t[1]), t[1], t[0]))


def write_worklist(path, ranking, worst=None):
    rows = ranking if worst is None else ranking[:worst]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["video_id", "accuracy"])
        for vid, acc in rows:
            w.writerow([vid, f"{acc:.6f}"])


def write_report(path, report: EvalReport):
    Path(path).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
