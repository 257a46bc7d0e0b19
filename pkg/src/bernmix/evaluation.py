"""Scoring model-predicted frequent itemsets against exactly mined ones."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .miner import ItemsetCollection
from .model import MixtureModel, itemset_probabilities


@dataclass(frozen=True)
class SetComparison:
    n_missed: int
    n_false: int
    n_correct: int
    f_neg: float | None
    f_pos: float | None


def _rate(num: int, den: int) -> float | None:
    return num / den if den else None


def compare_sets(truth: ItemsetCollection, predicted: ItemsetCollection) -> SetComparison:
    """False-negative and false-positive rates of ``predicted`` against ``truth``.

    Only item lists are compared. A rate whose denominator is zero is ``None``.
    """
    if truth.minsup != predicted.minsup:
        raise ValueError(f"threshold mismatch: {truth.minsup} vs {predicted.minsup}")
    t = truth.itemsets.keys()
    p = predicted.itemsets.keys()
    correct = len(t & p)
    missed = len(t) - correct
    false = len(p) - correct
    return SetComparison(missed, false, correct,
                         _rate(missed, missed + correct), _rate(false, false + correct))


def _truth_arrays(truth: ItemsetCollection, model: MixtureModel):
    if len(truth) == 0:
        raise ValueError("the true itemset collection is empty")
    keys = list(truth.itemsets)
    f = np.fromiter(truth.itemsets.values(), dtype=np.float64, count=len(keys))
    if np.any(f <= 0):
        raise ValueError("true frequencies must be positive")
    return keys, f, itemset_probabilities(model, keys)


def relative_error(truth: ItemsetCollection, model: MixtureModel) -> float:
    """Mean of |p_model(I) - f(I)| / f(I) over every true frequent itemset."""
    _, f, p = _truth_arrays(truth, model)
    return float(np.mean(np.abs(p - f) / f))


def relative_difference_by_length(truth: ItemsetCollection,
                                  model: MixtureModel) -> dict[int, float]:
    """Signed mean relative difference per itemset length (negative = under-estimate)."""
    keys, f, p = _truth_arrays(truth, model)
    lengths = np.fromiter((len(k) for k in keys), dtype=np.int64, count=len(keys))
    diff = (p - f) / f
    return {int(L): float(diff[lengths == L].mean()) for L in np.unique(lengths)}


@dataclass
class EvalReport:
    minsup: float
    n_missed: int
    n_false: int
    n_correct: int
    f_neg: float | None
    f_pos: float | None
    e_hat: float | None = None
    d_hat_by_length: dict[int, float] = field(default_factory=dict)
    count_by_length: dict[int, int] = field(default_factory=dict)
    dataset: str = ""
    model: str = ""

    def metrics(self) -> dict[str, float | None]:
        return {
            "f_neg": self.f_neg,
            "f_pos": self.f_pos,
            "e_hat": self.e_hat,
            "n_missed": self.n_missed,
            "n_false": self.n_false,
            "n_correct": self.n_correct,
        }


def evaluate(truth: ItemsetCollection, predicted: ItemsetCollection,
             model: MixtureModel | None = None, dataset: str = "",
             model_name: str = "") -> EvalReport:
    cmp = compare_sets(truth, predicted)
    report = EvalReport(truth.minsup, cmp.n_missed, cmp.n_false, cmp.n_correct,
                        cmp.f_neg, cmp.f_pos, dataset=dataset, model=model_name,
                        count_by_length=truth.counts_by_length())
    if model is not None and len(truth):
        report.e_hat = relative_error(truth, model)
        report.d_hat_by_length = relative_difference_by_length(truth, model)
    return report


def _cell(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "n/a"
    if isinstance(v, int):
        return str(v)
    return f"{v:.6f}"


def _pct(v) -> str:
    return "n/a" if v is None else f"{100 * v:.2f}%"


def report_text(report: EvalReport) -> str:
    lines = [
        f"minsup      {report.minsup}",
        f"dataset     {report.dataset or '-'}",
        f"model       {report.model or '-'}",
        f"N_correct   {report.n_correct}",
        f"N_missed    {report.n_missed}",
        f"N_false     {report.n_false}",
        f"F-          {_pct(report.f_neg)}",
        f"F+          {_pct(report.f_pos)}",
        f"E_hat       {_pct(report.e_hat)}",
    ]
    if report.d_hat_by_length:
        lines.append("length  count  D_hat")
        for L, d in report.d_hat_by_length.items():
            lines.append(f"{L:>6}  {report.count_by_length.get(L, 0):>5}  {d:+.6f}")
    return "\n".join(lines) + "\n"


def report_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    buf.write("metric,value\n")
    for k, v in report.metrics().items():
        buf.write(f"{k},{_cell(v)}\n")
    return buf.getvalue()


def length_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    buf.write("length,count,d_hat\n")
    for L, d in report.d_hat_by_length.items():
        buf.write(f"{L},{report.count_by_length.get(L, 0)},{_cell(d)}\n")
    return buf.getvalue()


def aggregate(reports: list[EvalReport]) -> dict[str, tuple[float, float] | None]:
    """Mean and sample standard deviation of each metric across runs."""
    out: dict[str, tuple[float, float] | None] = {}
    for key in ("f_neg", "f_pos", "e_hat"):
        vals = [r.metrics()[key] for r in reports if r.metrics()[key] is not None]
        if not vals:
            out[key] = None
        else:
            std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
            out[key] = (float(np.mean(vals)), std)
    return out


def aggregate_csv(reports: list[EvalReport]) -> str:
    buf = io.StringIO()
    buf.write("metric,mean,std," + ",".join(f"run{i}" for i in range(len(reports))) + "\n")
    agg = aggregate(reports)
    for key, stats in agg.items():
        runs = ",".join(_cell(r.metrics()[key]) for r in reports)
        if stats is None:
            buf.write(f"{key},n/a,n/a,{runs}\n")
        else:
            buf.write(f"{key},{_cell(stats[0])},{_cell(stats[1])},{runs}\n")
    return buf.getvalue()
