"""Analytical accuracy models fit to per-bin and per-subpopulation tables.

Three pieces: a one-parameter per-group accuracy curve C^(alpha-1)*e^(-alpha*x)
over confusion score x, a normalized-log2 complexity index for a model
family, and the subpopulation collinearity system that expresses each test
set's accuracy line through shared easy/medium parameters plus a chance-level
hard group.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def eval_group_model(alpha: float, x, n_classes: int) -> np.ndarray | float:
    """Accuracy of a complexity-alpha model on samples of confusion score x."""
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError("OutOfDomain", f"alpha {alpha!r} outside [0, 1]")
    if n_classes < 2:
        raise ValidationError("OutOfDomain", f"need n_classes >= 2, got {n_classes}")
    arr = np.asarray(x, dtype=np.float64)
    log_c = math.log(n_classes)
    if np.any(arr < 0.0) or np.any(arr > log_c + 1e-9):
        raise ValidationError("OutOfDomain", f"confusion score outside [0, ln {n_classes}]")
    out = n_classes ** (alpha - 1.0) * np.exp(-alpha * arr)
    return float(out) if np.isscalar(x) else out


@dataclass(frozen=True)
class GroupAccuracyModel:
    alpha: float
    n_classes: int
    fit_rss: float  # weighted residual sum of squares at alpha
    n_bins_used: int


def fit_group_model(
    bin_centers, bin_accuracies, weights, n_classes: int
) -> GroupAccuracyModel:
    """Least-squares alpha: coarse 1e-3 grid, then golden-section to 1e-8."""
    x = np.asarray(bin_centers, dtype=np.float64)
    y = np.asarray(bin_accuracies, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if not x.shape == y.shape == w.shape:
        raise ValidationError("LengthMismatch", "centers, accuracies, weights must align")
    keep = np.isfinite(y) & (w > 0)
    x, y, w = x[keep], y[keep], w[keep]
    if x.size < 2:
        raise ValidationError("InsufficientBins", f"need >= 2 usable bins, got {x.size}")

    def objective(alpha: float) -> float:
        model = n_classes ** (alpha - 1.0) * np.exp(-alpha * x)
        return float(np.dot(w, (y - model) ** 2))

    grid = np.linspace(0.0, 1.0, 1001)
    grid_vals = [objective(a) for a in grid]
    best = int(np.argmin(grid_vals))
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, len(grid) - 1)]

    # golden-section on the bracketing interval
    c = hi - GOLDEN * (hi - lo)
    d = lo + GOLDEN * (hi - lo)
    fc, fd = objective(c), objective(d)
    while hi - lo > 1e-8:
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - GOLDEN * (hi - lo)
            fc = objective(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + GOLDEN * (hi - lo)
            fd = objective(d)
    refined = 0.5 * (lo + hi)
    # the refined point can never be worse than the grid optimum
    candidates = [(objective(refined), refined), (grid_vals[best], float(grid[best]))]
    rss, alpha = min(candidates)
    return GroupAccuracyModel(
        alpha=float(alpha), n_classes=n_classes, fit_rss=rss, n_bins_used=int(x.size)
    )


def complexity_index(param_counts) -> np.ndarray:
    """Normalized log2 parameter count within one family: min -> 0, max -> 1."""
    counts = np.asarray(param_counts, dtype=np.float64)
    if counts.size < 2 or np.any(counts <= 0):
        raise ValidationError("DegenerateFamily", "need >= 2 positive parameter counts")
    logs = np.log2(counts)
    span = logs.max() - logs.min()
    if span == 0.0:
        raise ValidationError("DegenerateFamily", "all parameter counts are equal")
    return (logs - logs.min()) / span


@dataclass(frozen=True)
class CollinearityFit:
    per_dataset: dict[str, tuple[float, float, float]]  # name -> (minacc, slope, ols_rss)
    minacc_easy: float
    s_easy: float
    minacc_med: float
    s_med: float
    chance_level: float
    constraint_residuals: dict[str, tuple[float, float]]  # (minacc resid, slope resid)


def fit_collinearity(
    accuracy_tables: dict[str, tuple[np.ndarray, np.ndarray]],
    subpop_ratios: dict[str, tuple[float, float, float]],
    n_classes: int,
) -> CollinearityFit:
    """Fit acc(alpha) lines per dataset, then shared easy/medium parameters.

    accuracy_tables maps dataset -> (alphas, accuracies); subpop_ratios maps
    dataset -> (rho_easy, rho_med, rho_hard). The hard group is pinned to the
    chance level 1/C.
    """
    names = sorted(accuracy_tables)
    if len(names) < 2:
        raise ValidationError("RankDeficient", "need >= 2 datasets")
    if set(subpop_ratios) < set(names):
        raise ValidationError("RankDeficient", "every dataset needs subpopulation ratios")
    chance = 1.0 / n_classes

    per_dataset: dict[str, tuple[float, float, float]] = {}
    for name in names:
        alphas = np.asarray(accuracy_tables[name][0], dtype=np.float64)
        accs = np.asarray(accuracy_tables[name][1], dtype=np.float64)
        if alphas.shape != accs.shape or alphas.size < 2:
            raise ValidationError("RankDeficient", f"{name}: need >= 2 (alpha, acc) points")
        if np.unique(alphas).size < 2:
            raise ValidationError("RankDeficient", f"{name}: all alphas equal")
        design = np.column_stack([np.ones_like(alphas), alphas])
        coef, _, _, _ = np.linalg.lstsq(design, accs, rcond=None)
        rss = float(((accs - design @ coef) ** 2).sum())
        per_dataset[name] = (float(coef[0]), float(coef[1]), rss)

    rho = np.array([subpop_ratios[n][:2] for n in names], dtype=np.float64)
    # a group no dataset touches leaves its parameters unconstrained (NaN);
    # among the touched groups the ratio rows must be independent
    active = np.flatnonzero(np.any(rho != 0.0, axis=0))
    if active.size == 0 or np.linalg.matrix_rank(rho[:, active]) < active.size:
        raise ValidationError(
            "RankDeficient", "easy/medium ratio rows do not separate the groups"
        )
    rho_hard = np.array([subpop_ratios[n][2] for n in names], dtype=np.float64)
    minaccs = np.array([per_dataset[n][0] for n in names])
    slopes = np.array([per_dataset[n][1] for n in names])

    minacc_shared = np.full(2, np.nan)
    slope_shared = np.full(2, np.nan)
    sol_min, _, _, _ = np.linalg.lstsq(rho[:, active], minaccs - rho_hard * chance, rcond=None)
    sol_slope, _, _, _ = np.linalg.lstsq(rho[:, active], slopes, rcond=None)
    minacc_shared[active] = sol_min
    slope_shared[active] = sol_slope

    fit_min = rho[:, active] @ sol_min
    fit_slope = rho[:, active] @ sol_slope
    resid_min = minaccs - rho_hard * chance - fit_min
    resid_slope = slopes - fit_slope
    residuals = {
        name: (float(resid_min[i]), float(resid_slope[i])) for i, name in enumerate(names)
    }
    return CollinearityFit(
        per_dataset=per_dataset,
        minacc_easy=float(minacc_shared[0]),
        minacc_med=float(minacc_shared[1]),
        s_easy=float(slope_shared[0]),
        s_med=float(slope_shared[1]),
        chance_level=chance,
        constraint_residuals=residuals,
    )


def collinearity_accuracy(
    fit: CollinearityFit, ratios: tuple[float, float, float], alpha: float
) -> float:
    """Accuracy the fitted subpopulation model assigns to (ratios, alpha)."""
    rho_e, rho_m, rho_h = ratios
    return (
        rho_e * (fit.minacc_easy + alpha * fit.s_easy)
        + rho_m * (fit.minacc_med + alpha * fit.s_med)
        + rho_h * fit.chance_level
    )
