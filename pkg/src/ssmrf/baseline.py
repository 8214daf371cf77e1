"""Nodewise L1 logistic regressions and their symmetrized model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ssmrf.mrf_core import Dataset, ModelSpec, ParamState

KKT_TOL = 1e-6
MAX_ITERS = 50000
STEP_FLOOR = 1e-12


@dataclass(frozen=True)
class NodewiseFit:
    """weights[i, j] regresses node i on node j; the diagonal is zero."""

    intercepts: np.ndarray
    weights: np.ndarray
    lam: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")


def _soft(v, thr):
    return np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)


def _kkt_residual(gw, gc, w, lam, skip):
    res = abs(gc)
    on = w != 0
    if on.any():
        res = max(res, float(np.abs(gw[on] + lam * np.sign(w[on])).max()))
    off = ~on
    off[skip] = False
    if off.any():
        res = max(res, float(np.maximum(np.abs(gw[off]) - lam, 0.0).max()))
    return res


def _fit_one(X, xi, i, lam):
    """Proximal gradient with backtracking and extrapolation; the intercept
    rides along unpenalized."""
    N, d = X.shape
    w = np.zeros(d)
    c = 0.0
    wy, cy = w.copy(), c
    t = 1.0
    mom = 1.0

    def smooth(wv, cv):
        z = cv + X @ wv
        return float(np.mean(np.logaddexp(0.0, z) - xi * z))

    def grads(wv, cv):
        z = cv + X @ wv
        r = 1.0 / (1.0 + np.exp(-z)) - xi
        gw = X.T @ r / N
        gw[i] = 0.0
        return gw, float(r.mean())

    for it in range(MAX_ITERS):
        gw, gc = grads(wy, cy)
        fy = smooth(wy, cy)
        while True:
            wn = _soft(wy - t * gw, t * lam)
            wn[i] = 0.0
            cn = cy - t * gc
            dw = wn - wy
            dc = cn - cy
            bound = fy + gw @ dw + gc * dc + (dw @ dw + dc * dc) / (2.0 * t)
            if smooth(wn, cn) <= bound + 1e-12:
                break
            t *= 0.5
            if t < STEP_FLOOR:
                raise RuntimeError("backtracking step underflow")
        mom_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * mom * mom))
        gamma = (mom - 1.0) / mom_next
        wy = wn + gamma * (wn - w)
        cy = cn + gamma * (cn - c)
        w, c, mom = wn, cn, mom_next
        if it % 5 == 0:
            g2w, g2c = grads(w, c)
            if _kkt_residual(g2w, g2c, w, lam, i) <= KKT_TOL:
                return w, c
        t = min(t * 1.2, 16.0)
    raise RuntimeError("nodewise fit did not converge")


def fit_nodewise(data: Dataset, lam: float) -> NodewiseFit:
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if data.N < 1:
        raise ValueError("need at least one observation")
    X = data.observations.astype(np.float64)
    d = X.shape[1]
    W = np.zeros((d, d))
    C = np.zeros(d)
    for i in range(d):
        W[i], C[i] = _fit_one(X, X[:, i], i, lam)
    return NodewiseFit(intercepts=C, weights=W, lam=lam)


def combine(fit: NodewiseFit, rule: str, m: ModelSpec | None = None) -> ParamState:
    """Symmetrize the two directed estimates per pair: 'max' keeps the
    larger-magnitude one (edge active if either is nonzero), 'min' the
    smaller (active only when both are)."""
    if rule not in ("max", "min"):
        raise ValueError("rule must be 'max' or 'min'")
    d = fit.intercepts.shape[0]
    if m is None:
        m = ModelSpec.complete(d)
    a = fit.weights[m.edge_i, m.edge_j]
    b = fit.weights[m.edge_j, m.edge_i]
    if rule == "max":
        keep = np.where(np.abs(a) >= np.abs(b), a, b)
    else:
        keep = np.where(np.abs(a) <= np.abs(b), a, b)
    active = keep != 0.0
    return ParamState(
        biases=fit.intercepts.copy(),
        edge_values=np.where(active, keep, 0.0),
        edge_active=active.astype(np.uint8),
    )
