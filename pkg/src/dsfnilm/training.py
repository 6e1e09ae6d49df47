"""Learning appliance state levels and line connectivity weights from submetered data."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .setfn import AggregateSeries, ApplianceModel, HouseholdModel

log = logging.getLogger(__name__)


class Quantization(NamedTuple):
    levels: np.ndarray
    degenerate: bool
    iterations: int


def lloyd_max_quantize(series, k: int, max_iter: int = 500) -> Quantization:
    """Lloyd-Max levels of a 1-D sample, ascending.

    Centroids start at the (2j-1)/(2k) quantiles. An empty cell is reseeded at
    the sample with the largest quantization error. With fewer than ``k``
    distinct values the distinct values are returned, padded with the largest,
    and ``degenerate`` is set.
    """
    x = np.sort(np.asarray(series, dtype=float).ravel())
    if k < 2:
        raise ValueError("need at least 2 states")
    if x.size < k:
        raise ValueError(f"series of length {x.size} is shorter than k={k}")
    distinct = np.unique(x)
    if distinct.size < k:
        pad = np.full(k - distinct.size, distinct[-1])
        return Quantization(np.concatenate([distinct, pad]), True, 0)

    c = np.quantile(x, (2 * np.arange(1, k + 1) - 1) / (2 * k))
    labels = None
    it = 0
    for it in range(1, max_iter + 1):
        new = np.abs(x[:, None] - c[None, :]).argmin(axis=1)
        counts = np.bincount(new, minlength=k)
        while np.any(counts == 0):
            err = np.abs(x - c[new])
            j = int(np.flatnonzero(counts == 0)[0])
            far = int(err.argmax())
            c[j] = x[far]
            new = np.abs(x[:, None] - c[None, :]).argmin(axis=1)
            counts = np.bincount(new, minlength=k)
        c_new = np.bincount(new, weights=x, minlength=k) / counts
        if labels is not None and np.array_equal(new, labels) and np.array_equal(c_new, c):
            break
        labels, c = new, c_new
    return Quantization(np.sort(c), False, it)


def simplex_project(v) -> np.ndarray:
    """Euclidean projection onto ``{w >= 0, sum(w) = 1}`` (sort and threshold)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, v.size + 1)
    rho = int(np.count_nonzero(u - css / ks > 0))
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def project_rows(W) -> np.ndarray:
    return np.apply_along_axis(simplex_project, 1, np.asarray(W, dtype=float))


@dataclass
class ConnectivityFit:
    weights: np.ndarray              # L x R, rows on the simplex
    degenerate: list[int]            # rows with an all-zero appliance series
    iterations: int = 0
    objectives: list[float] = field(default_factory=list)


def connectivity_objective(W, X, Y) -> float:
    """``sum_{r,t} (y^r_t - sum_i w_i^r x_{i,t})^2`` with X: L x T, Y: T x R."""
    return float(((Y - X.T @ W) ** 2).sum())


def _power_iteration(G: np.ndarray, steps: int = 50) -> float:
    v = np.ones(G.shape[0]) / np.sqrt(G.shape[0])
    lam = 0.0
    for _ in range(steps):
        w = G @ v
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0
        v = w / nrm
        lam = float(v @ G @ v)
    return lam


def fit_connectivity(appliance_series, agg, max_iter: int = 50_000, tol: float = 1e-10,
                     record_objective: bool = False) -> ConnectivityFit:
    """Least-squares line weights per appliance on the product of simplices, by projected gradient."""
    X = np.asarray(appliance_series, dtype=float)
    Y = agg.values if isinstance(agg, AggregateSeries) else np.asarray(agg, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.ndim != 2 or X.shape[1] != Y.shape[0]:
        raise ValueError(f"appliance series {X.shape} and aggregate {Y.shape} disagree on the time axis")
    L, R = X.shape[0], Y.shape[1]
    W = np.full((L, R), 1.0 / R)
    zero = [i for i in range(L) if not np.any(X[i])]
    active = [i for i in range(L) if i not in zero]
    for i in zero:
        log.warning("appliance %d has an all-zero series; its line weights default to uniform", i)
    fit = ConnectivityFit(W, zero)
    if not active:
        return fit

    Xa = X[active]
    G = Xa @ Xa.T           # L_a x L_a
    XY = Xa @ Y             # L_a x R
    step = 1.0 / (2.0 * _power_iteration(G))
    Wa = W[active].copy()
    if record_objective:
        fit.objectives.append(connectivity_objective(Wa, Xa, Y))
    for it in range(1, max_iter + 1):
        grad = 2.0 * (G @ Wa - XY)
        W_new = project_rows(Wa - step * grad)
        moved = float(np.abs(W_new - Wa).max())
        Wa = W_new
        if record_objective:
            fit.objectives.append(connectivity_objective(Wa, Xa, Y))
        if moved < tol:
            break
    fit.iterations = it
    W[active] = Wa
    fit.weights = W
    return fit


@dataclass
class TrainingReport:
    quantizations: list[Quantization]
    connectivity: ConnectivityFit


def train_model(appliance_series, agg, states_per_appliance: Sequence[int],
                lambdas: Sequence[float] | float = 1.0,
                names: Sequence[str] | None = None) -> tuple[HouseholdModel, TrainingReport]:
    """Quantize each appliance's series, then fit line weights against the raw series."""
    X = np.asarray(appliance_series, dtype=float)
    L = X.shape[0]
    if len(states_per_appliance) != L:
        raise ValueError(f"{len(states_per_appliance)} state counts given for {L} appliances")
    if np.isscalar(lambdas):
        lambdas = [float(lambdas)] * L
    if len(lambdas) != L:
        raise ValueError(f"{len(lambdas)} smoothness weights given for {L} appliances")
    names = list(names) if names is not None else [f"app{i + 1}" for i in range(L)]
    quants = [lloyd_max_quantize(X[i], int(k)) for i, k in enumerate(states_per_appliance)]
    conn = fit_connectivity(X, agg)
    apps = tuple(ApplianceModel(names[i], q.levels, conn.weights[i], lambdas[i])
                 for i, q in enumerate(quants))
    return HouseholdModel(apps, conn.weights.shape[1]), TrainingReport(quants, conn)
