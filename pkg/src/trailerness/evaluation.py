"""Binarization, precision/recall/F1, and multi-seed aggregation.

Conventions: binarization labels a frame positive iff score >= threshold
(ties go positive); each metric reports 0 when its denominator is 0; reports
use the sample standard deviation (n - 1 denominator), with a single run
reporting 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError

METRICS = ("precision", "recall", "f1")


def binarize(scores, threshold: float = 0.5) -> np.ndarray:
    if not 0.0 <= threshold <= 1.0:
        raise InvalidInputError(f"threshold must be in [0, 1], got {threshold}")
    scores = np.asarray(scores, dtype=np.float64)
    return (scores >= threshold).astype(np.uint8)


def confusion_counts(pred, gold) -> tuple[int, int, int, int]:
    """(TP, FP, FN, TN) between two binary frame tracks."""
    pred = np.asarray(pred).astype(bool).reshape(-1)
    gold = np.asarray(gold).astype(bool).reshape(-1)
    if pred.size != gold.size:
        raise InvalidInputError(
            f"prediction ({pred.size}) and gold ({gold.size}) lengths differ"
        )
    tp = int(np.count_nonzero(pred & gold))
    fp = int(np.count_nonzero(pred & ~gold))
    fn = int(np.count_nonzero(~pred & gold))
    tn = int(np.count_nonzero(~pred & ~gold))
    return tp, fp, fn, tn


def prf1(pred, gold) -> tuple[float, float, float]:
    tp, fp, fn, _ = confusion_counts(pred, gold)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


@dataclass
class EvalReport:
    per_seed: list[dict] = field(default_factory=list)
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)
    confusion: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "per_seed": self.per_seed,
                "mean": self.mean,
                "std": self.std,
                "confusion": self.confusion,
            },
            indent=2,
            sort_keys=True,
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        doc = json.loads(text)
        return cls(
            per_seed=doc["per_seed"],
            mean=doc["mean"],
            std=doc["std"],
            confusion=doc["confusion"],
        )

    @classmethod
    def load(cls, path) -> "EvalReport":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def multi_seed_report(triples, seeds=None, confusions=None) -> EvalReport:
    """Aggregate (precision, recall, F1) triples across runs.

    Means are arithmetic; spreads are sample standard deviations, 0 for a
    single run. Confusion counts, when given, are stored per seed and summed.
    """
    triples = [tuple(float(v) for v in t) for t in triples]
    if not triples:
        raise InvalidInputError("need at least one run")
    if seeds is None:
        seeds = list(range(len(triples)))
    per_seed = []
    for i, (t, s) in enumerate(zip(triples, seeds)):
        row = {"seed": int(s), "precision": t[0], "recall": t[1], "f1": t[2]}
        if confusions is not None:
            tp, fp, fn, tn = confusions[i]
            row["confusion"] = {"tp": int(tp), "fp": int(fp), "fn": int(fn), "tn": int(tn)}
        per_seed.append(row)

    values = np.array(triples, dtype=np.float64)
    mean = {m: float(values[:, i].mean()) for i, m in enumerate(METRICS)}
    std = {}
    for i, m in enumerate(METRICS):
        col = values[:, i]
        # identical runs have exactly zero spread; a naive ddof=1 std can
        # report ~1e-17 through mean roundoff
        if col.size == 1 or np.all(col == col[0]):
            std[m] = 0.0
        else:
            std[m] = float(col.std(ddof=1))
    confusion = {}
    if confusions is not None:
        total = np.asarray(confusions, dtype=np.int64).sum(axis=0)
        confusion = {
            "tp": int(total[0]),
            "fp": int(total[1]),
            "fn": int(total[2]),
            "tn": int(total[3]),
        }
    return EvalReport(per_seed=per_seed, mean=mean, std=std, confusion=confusion)
