"""Evaluation battery: per-class P/R/F1/F2 with weighted, macro, and
micro averaging, accuracy, and the mean over all fifteen values.

Zero-division convention: 0/0 -> 0 for precision, recall, and F-beta,
which penalizes never predicting a class.

For single-label multiclass data the pooled (micro) precision, recall,
F-beta, and accuracy are the same number, trace/total, and are
computed once so the identity holds bitwise. Likewise weighted
"accuracy" is support-weighted recall (which telescopes to overall
accuracy) and macro "accuracy" is mean recall (balanced accuracy);
both are assigned, not recomputed, so the identities are exact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class AverageBlock:
    precision: float
    recall: float
    f1: float
    f2: float
    accuracy: float

    def as_tuple(self) -> tuple[float, ...]:
        return (self.precision, self.recall, self.f1, self.f2, self.accuracy)

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall,
                "f1": self.f1, "f2": self.f2, "accuracy": self.accuracy}


@dataclass(frozen=True)
class MetricsReport:
    weighted: AverageBlock
    macro: AverageBlock
    micro: AverageBlock
    mean_of_15: float

    def as_row(self) -> tuple[float, ...]:
        return self.weighted.as_tuple() + self.macro.as_tuple() + self.micro.as_tuple()

    def to_dict(self) -> dict:
        return {"weighted": self.weighted.to_dict(), "macro": self.macro.to_dict(),
                "micro": self.micro.to_dict(), "mean_of_15": self.mean_of_15}

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(AverageBlock(**d["weighted"]), AverageBlock(**d["macro"]),
                   AverageBlock(**d["micro"]), d["mean_of_15"])


def assemble_report(weighted, macro, micro) -> MetricsReport:
    """Build a report from three 5-value blocks; the mean aggregates all 15."""
    w, m, u = AverageBlock(*weighted), AverageBlock(*macro), AverageBlock(*micro)
    mean15 = float(np.mean(w.as_tuple() + m.as_tuple() + u.as_tuple()))
    return MetricsReport(w, m, u, mean15)


def confusion(y_true, y_pred, num_classes: int = 3) -> np.ndarray:
    """Counts matrix, rows = true class, columns = predicted class."""
    t = np.asarray(y_true, dtype=np.intp)
    p = np.asarray(y_pred, dtype=np.intp)
    if t.shape != p.shape or t.ndim != 1 or t.size < 1:
        raise ValueError("y_true and y_pred must be equal-length non-empty vectors")
    for name, v in (("y_true", t), ("y_pred", p)):
        if v.min() < 0 or v.max() >= num_classes:
            raise ValueError(f"{name} labels must lie in [0, {num_classes})")
    mat = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(mat, (t, p), 1)
    return mat


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def _fbeta(p: float, r: float, beta: float) -> float:
    if p == r:
        return p  # exact, and covers the 0/0 convention
    b2 = beta * beta
    return _safe_div((1 + b2) * p * r, b2 * p + r)


def per_class_prf(matrix: np.ndarray):
    """Per class: (precision, recall, f1, f2, support)."""
    mat = np.asarray(matrix)
    k = mat.shape[0]
    out = []
    for c in range(k):
        tp = float(mat[c, c])
        support = float(mat[c, :].sum())
        predicted = float(mat[:, c].sum())
        p = _safe_div(tp, predicted)
        r = _safe_div(tp, support)
        out.append((p, r, _fbeta(p, r, 1.0), _fbeta(p, r, 2.0), int(support)))
    return out


def report(y_true, y_pred, num_classes: int = 3) -> MetricsReport:
    mat = confusion(y_true, y_pred, num_classes)
    rows = per_class_prf(mat)
    total = float(mat.sum())
    support = np.array([r[4] for r in rows], dtype=np.float64)
    per = np.array([r[:4] for r in rows], dtype=np.float64)  # (K, 4)

    overall_acc = float(mat.trace() / total)

    w_p, _w_r, w_f1, w_f2 = (float(np.dot(support, per[:, j]) / total)
                             for j in range(4))
    # support-weighted recall telescopes to trace/total; assign it so the
    # identity with overall accuracy is exact
    weighted = (w_p, overall_acc, w_f1, w_f2, overall_acc)

    m_p, m_r, m_f1, m_f2 = (float(per[:, j].mean()) for j in range(4))
    macro = (m_p, m_r, m_f1, m_f2, m_r)

    micro = (overall_acc,) * 5
    return assemble_report(weighted, macro, micro)


# ---------------------------------------------------------------------------
# prediction files for the standalone metrics command


def write_predictions(path, rows) -> None:
    """rows: iterable of (index, true, pred)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "true", "pred"])
        for index, true, pred in rows:
            writer.writerow([int(index), int(true), int(pred)])


def read_predictions(path) -> tuple[np.ndarray, np.ndarray]:
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["index", "true", "pred"]:
            raise ValueError(f"expected header index,true,pred in {path}")
        pairs = [(int(r[1]), int(r[2])) for r in reader if r]
    if not pairs:
        raise ValueError(f"no prediction rows in {path}")
    arr = np.asarray(pairs, dtype=np.intp)
    return arr[:, 0], arr[:, 1]
