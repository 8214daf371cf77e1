"""Posterior summaries, structure-recovery metrics, conditional likelihood
scoring for point and mixture models, and chain diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import default_rng

from ssmrf.mrf_core import (
    Dataset,
    ModelSpec,
    ParamState,
    conditional_log_likelihood_rows,
)

F1_THRESHOLD = 0.5


@dataclass(frozen=True)
class PosteriorSummary:
    """Per-edge inclusion rates and conditional value moments over a chain.

    cond_mean is NaN where no retained sample had the edge; cond_std is NaN
    where fewer than two samples did.
    """

    edge_prob: np.ndarray
    cond_mean: np.ndarray
    cond_std: np.ndarray
    bias_mean: np.ndarray
    density_mean: float
    density_std: float


def _values_matrix(samples):
    E = samples[0].y.shape[0]
    Y = np.zeros((len(samples), E), dtype=np.float64)
    V = np.zeros((len(samples), E), dtype=np.float64)
    for k, s in enumerate(samples):
        Y[k] = s.y
        V[k, s.y == 1] = s.a
    return Y, V


def params_from_sample(s) -> ParamState:
    """Rebuild the dense parameter vectors from one retained sample."""
    E = s.y.shape[0]
    vals = np.zeros(E)
    vals[s.y == 1] = s.a
    return ParamState(biases=s.biases.copy(), edge_values=vals,
                      edge_active=s.y.astype(np.uint8).copy())


def summarize(samples) -> PosteriorSummary:
    samples = list(samples)
    if not samples:
        raise ValueError("no samples to summarize")
    Y, V = _values_matrix(samples)
    K, E = Y.shape
    counts = Y.sum(axis=0)
    edge_prob = counts / K
    with np.errstate(invalid="ignore", divide="ignore"):
        cond_mean = np.where(counts > 0, V.sum(axis=0) / counts, np.nan)
        dev = (V - np.where(np.isnan(cond_mean), 0.0, cond_mean)) * Y
        cond_var = np.where(counts > 1, (dev * dev).sum(axis=0)
                            / np.maximum(counts - 1, 1), np.nan)
    cond_std = np.sqrt(cond_var)
    dens = Y.mean(axis=1)
    biases = np.stack([s.biases for s in samples])
    return PosteriorSummary(
        edge_prob=edge_prob,
        cond_mean=cond_mean,
        cond_std=cond_std,
        bias_mean=biases.mean(axis=0),
        density_mean=float(dens.mean()),
        density_std=float(dens.std(ddof=1)) if K > 1 else 0.0,
    )


def point_model(summary: PosteriorSummary, threshold: float = 0.5) -> ParamState:
    """Keep edges whose inclusion probability reaches the threshold, valued
    at their conditional means."""
    active = summary.edge_prob >= threshold
    vals = np.where(active, np.nan_to_num(summary.cond_mean), 0.0)
    return ParamState(biases=summary.bias_mean.copy(), edge_values=vals,
                      edge_active=active.astype(np.uint8))


# ----------------------------------------------------------- structure metrics

def _counts_at(scores, truth, threshold):
    pred = scores >= threshold
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    return tp, fp, fn


def pr_curve(edge_scores, true_edges):
    """One (threshold, precision, recall) row per distinct score, descending,
    preceded by the empty-prediction anchor."""
    scores = np.asarray(edge_scores, dtype=np.float64)
    truth = np.asarray(true_edges).astype(bool)
    if scores.shape != truth.shape:
        raise ValueError("scores and truth must align")
    if not truth.any():
        raise ValueError("no true edges: recall is undefined")
    rows = [(np.inf, 1.0, 0.0)]
    for s in np.unique(scores)[::-1]:
        tp, fp, fn = _counts_at(scores, truth, s)
        rows.append((float(s), tp / (tp + fp), tp / (tp + fn)))
    return rows


def f1_at(edge_scores, true_edges, threshold: float = F1_THRESHOLD) -> float:
    scores = np.asarray(edge_scores, dtype=np.float64)
    truth = np.asarray(true_edges).astype(bool)
    tp, fp, fn = _counts_at(scores, truth, threshold)
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    return 2 * prec * rec / (prec + rec) if prec + rec else 0.0


# -------------------------------------------------------------------- scoring

def _draw_groups(m: ModelSpec, n_cases: int, group_rule: str, seed):
    """One node group per test case; 'all' shares the full set, 'grid3x3'
    draws a uniform window per case."""
    if group_rule == "all":
        if m.d > 16:
            raise ValueError("'all' group rule needs d <= 16")
        return [np.arange(m.d)] * n_cases
    if group_rule == "grid3x3":
        if m.lattice_dims is None:
            raise ValueError("'grid3x3' group rule needs a lattice spec")
        R, C = m.lattice_dims
        if R < 3 or C < 3:
            raise ValueError("lattice too small for 3x3 windows")
        rng = default_rng(seed)
        r0 = rng.integers(0, R - 2, size=n_cases)
        c0 = rng.integers(0, C - 2, size=n_cases)
        base = (np.arange(3)[:, None] * C + np.arange(3)[None, :]).ravel()
        return [r * C + c + base for r, c in zip(r0, c0)]
    raise ValueError("unknown group rule")


def _cases_for_params(p: ParamState, m: ModelSpec, test: Dataset, groups):
    out = np.empty(test.N)
    rows = test.observations
    keys = np.array([g[0] * (m.d + 1) + g[-1] for g in groups])
    for key in np.unique(keys):
        idx = np.flatnonzero(keys == key)
        out[idx] = conditional_log_likelihood_rows(
            p, m, rows[idx], groups[int(idx[0])])
    return out


def cll_point_cases(p: ParamState, m: ModelSpec, test: Dataset,
                    group_rule: str, seed) -> np.ndarray:
    if test.N < 1:
        raise ValueError("empty test set")
    groups = _draw_groups(m, test.N, group_rule, seed)
    return _cases_for_params(p, m, test, groups)


def cll_point(p: ParamState, m: ModelSpec, test: Dataset, group_rule: str,
              seed) -> float:
    return float(cll_point_cases(p, m, test, group_rule, seed).mean())


def cll_bayes_cases(samples, m: ModelSpec, test: Dataset, group_rule: str,
                    seed) -> np.ndarray:
    """Mixture predictive: per case, log of the average component likelihood."""
    samples = list(samples)
    if not samples:
        raise ValueError("no samples")
    if test.N < 1:
        raise ValueError("empty test set")
    groups = _draw_groups(m, test.N, group_rule, seed)
    comp = np.stack([
        _cases_for_params(params_from_sample(s), m, test, groups)
        for s in samples
    ])
    mx = comp.max(axis=0)
    return mx + np.log(np.exp(comp - mx).mean(axis=0))


def cll_bayes(samples, m: ModelSpec, test: Dataset, group_rule: str,
              seed) -> float:
    return float(cll_bayes_cases(samples, m, test, group_rule, seed).mean())


# ---------------------------------------------------------------- diagnostics

def autocorr(series, max_lag: int) -> np.ndarray:
    """Biased-normalization autocorrelation estimate, lags 0..max_lag."""
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("series must be one-dimensional")
    n = x.shape[0]
    if n <= 4 * max_lag:
        raise ValueError("series too short for the requested lag")
    # x.mean() of a constant series need not be exact, so test the range:
    # the residue after centering would mimic a spurious (n-k)/n ramp.
    if x.size == 0 or x.max() == x.min():
        raise ValueError("constant series has no autocorrelation")
    x = x - x.mean()
    c0 = float(x @ x) / n
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for lag in range(1, max_lag + 1):
        out[lag] = (x[:-lag] @ x[lag:]) / n / c0
    return out
