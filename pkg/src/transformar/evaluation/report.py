"""Per-fold evaluation reports in the Table-1 layout."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DegenerateInputError, NumericError
from .correlation import krcc, plcc_rmse, srcc
from .logistic import fit_logistic, logistic5


@dataclass
class EvalReport:
    beta: list
    srcc: float
    krcc: float
    plcc: float
    rmse: float
    n: int
    fold: int | None = None
    per_sigma: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**d)

    def row(self) -> str:
        return f"SRCC {self.srcc:.4f}  KRCC {self.krcc:.4f}  PLCC {self.plcc:.4f}  RMSE {self.rmse:.4f}"


def evaluate_scores(pred, mos, sigma=None, fold: int | None = None) -> EvalReport:
    """SRCC/KRCC on raw scores, PLCC/RMSE after the logistic mapping."""
    pred = np.asarray(pred, dtype=np.float64)
    mos = np.asarray(mos, dtype=np.float64)
    where = "" if fold is None else f" (fold {fold})"
    try:
        beta = fit_logistic(pred, mos)
        fitted = logistic5(pred, beta)
        plcc, err = plcc_rmse(fitted, mos)
        report = EvalReport(beta=[float(b) for b in beta], srcc=srcc(pred, mos), krcc=krcc(pred, mos),
                            plcc=plcc, rmse=err, n=int(pred.size), fold=fold)
    except DegenerateInputError as exc:
        raise DegenerateInputError(f"{exc}{where}") from exc
    except NumericError as exc:
        raise NumericError(f"{exc}{where}") from exc
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=np.float64)
        for s in np.unique(sigma):
            mask = sigma == s
            entry = {"n": int(mask.sum())}
            try:
                p, r = plcc_rmse(fitted[mask], mos[mask])
                entry.update(srcc=srcc(pred[mask], mos[mask]), krcc=krcc(pred[mask], mos[mask]), plcc=p, rmse=r)
            except DegenerateInputError:
                entry.update(srcc=None, krcc=None, plcc=None, rmse=None)
            report.per_sigma[f"{s:g}"] = entry
    return report


def write_scores_csv(path, ids, pred, mos, sigma=None) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "pmos", "mos", "sigma"])
        for i, tid in enumerate(ids):
            w.writerow([tid, repr(float(pred[i])), repr(float(mos[i])), "" if sigma is None else repr(float(sigma[i]))])


def read_scores_csv(path):
    ids, pred, mos, sigma = [], [], [], []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            ids.append(row["id"])
            pred.append(float(row["pmos"]))
            mos.append(float(row["mos"]))
            sigma.append(float(row["sigma"]) if row["sigma"] else np.nan)
    return ids, np.array(pred), np.array(mos), np.array(sigma)


def evaluate_fold(model, test_arrays, fold=None, out_dir=None, batch_size: int = 32) -> EvalReport:
    """Score the test triplets, fit the logistic and compute all four criteria.

    With ``out_dir`` the report is written as ``fold_<i>.json`` next to the
    raw ``fold_<i>_scores.csv`` pairs.
    """
    if len(test_arrays) == 0:
        raise DegenerateInputError("evaluate_fold: empty test set")
    index = None if fold is None else (fold if isinstance(fold, int) else fold.index)
    pred = model.predict(test_arrays.fg, test_arrays.bg, test_arrays.sup, batch_size=batch_size)
    report = evaluate_scores(pred, test_arrays.mos, test_arrays.sigma, fold=index)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        tag = "all" if index is None else str(index)
        (out / f"fold_{tag}.json").write_text(report.to_json())
        write_scores_csv(out / f"fold_{tag}_scores.csv", test_arrays.ids, pred, test_arrays.mos, test_arrays.sigma)
    return report


def table_rows(reports) -> str:
    """Mean over folds in the SRCC/KRCC/PLCC/RMSE layout."""
    keys = ("srcc", "krcc", "plcc", "rmse")
    means = {k: float(np.mean([getattr(r, k) for r in reports])) for k in keys}
    lines = ["fold  SRCC    KRCC    PLCC    RMSE"]
    for r in reports:
        lines.append(f"{r.fold!s:>4}  {r.srcc:.4f}  {r.krcc:.4f}  {r.plcc:.4f}  {r.rmse:.4f}")
    lines.append(f"mean  {means['srcc']:.4f}  {means['krcc']:.4f}  {means['plcc']:.4f}  {means['rmse']:.4f}")
    return "\n".join(lines)
