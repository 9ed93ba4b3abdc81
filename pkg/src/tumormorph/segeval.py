"""Overlap metrics between predicted and reference segmentation masks."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

METRICS = ("dice", "iou", "precision", "recall", "f1")


@dataclass(frozen=True)
class MaskConfusion:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def mask_confusion(pred, gt) -> MaskConfusion:
    p = np.asarray(pred, dtype=bool)
    g = np.asarray(gt, dtype=bool)
    if p.shape != g.shape:
        raise ValueError(f"mask shapes differ: prediction {p.shape}, reference {g.shape}")
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return MaskConfusion(tp, fp, fn, p.size - tp - fp - fn)


def _div(a, b):
    return a / b if b else 0.0


def mask_metrics(pred, gt) -> dict:
    """Dice, IoU, precision, recall and F1 of ``pred`` against ``gt``.

    Two empty masks agree perfectly and score 1.0 everywhere. Otherwise any
    ratio with a zero denominator is 0.
    """
    c = mask_confusion(pred, gt)
    if c.tp + c.fp + c.fn == 0:
        return dict.fromkeys(METRICS, 1.0)
    precision = _div(c.tp, c.tp + c.fp)
    recall = _div(c.tp, c.tp + c.fn)
    return {
        "dice": 2 * c.tp / (2 * c.tp + c.fp + c.fn),
        "iou": c.tp / (c.tp + c.fp + c.fn),
        "precision": precision,
        "recall": recall,
        "f1": _div(2 * precision * recall, precision + recall),
    }


def aggregate_report(groups: dict) -> dict:
    """Per-class and overall mean and population std of each metric.

    ``groups`` maps class name to a list of metric dicts. The result maps
    each class (plus ``"Overall"``) to ``{metric: (mean, std)}``.
    """
    if not groups:
        raise ValueError("no groups to aggregate")
    report = {}
    pooled = []
    for name, rows in groups.items():
        if not rows:
            raise ValueError(f"class {name!r} has no samples")
        pooled.extend(rows)
        report[name] = _summarize(rows)
    report["Overall"] = _summarize(pooled)
    return report


def _summarize(rows):
    out = {}
    for m in METRICS:
        v = np.array([r[m] for r in rows], dtype=float)
        out[m] = (float(v.mean()), float(v.std()))
    return out


def write_report_csv(report: dict, path, digits: int = 3) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("class",) + METRICS)
        for name, stats in report.items():
            w.writerow([name] + [f"{stats[m][0]:.{digits}f}±{stats[m][1]:.{digits}f}" for m in METRICS])
