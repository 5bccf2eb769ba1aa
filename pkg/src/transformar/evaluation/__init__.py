"""Evaluation protocol: logistic mapping, correlation criteria, PSNR/SSIM."""

from .correlation import krcc, pearson, plcc_rmse, rankdata, srcc
from .fidelity import psnr, ssim, ssim_map
from .logistic import fit_logistic, logistic5
from .report import EvalReport, evaluate_fold, evaluate_scores, read_scores_csv, table_rows, write_scores_csv

__all__ = [name for name in dir() if not name.startswith("_")]
