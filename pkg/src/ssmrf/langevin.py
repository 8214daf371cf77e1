"""Preconditioned one-leapfrog Langevin updates with partial momentum refresh.

The update targets the continuous parameters (biases plus the values of
currently active edges).  The approximate step plugs chain-bank feature
means into the gradient and skips accept/reject; the exact variant uses
enumerated moments and corrects with a Metropolis test on the full joint
of parameters and momentum.

The diagonal preconditioner is accumulated as a running average of the
per-coordinate posterior curvature during burn-in, then frozen; before
freezing the identity is used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ssmrf.gibbs import MomentEstimates
from ssmrf.mrf_core import Dataset, ExactTable, ModelSpec, ParamState

HESSIAN_FLOOR = 1e-6


@dataclass
class LmcConfig:
    step_size: float
    refresh_alpha: float
    prior_var_edges: float
    prior_var_bias: float

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if not 0.0 <= self.refresh_alpha < 1.0:
            raise ValueError("refresh_alpha must lie in [0, 1)")
        if self.prior_var_edges <= 0 or self.prior_var_bias <= 0:
            raise ValueError("prior variances must be positive")


@dataclass
class LmcState:
    """Momentum aligned with (biases ++ active edges), plus preconditioner state."""

    momentum: np.ndarray
    n_biases: int
    hessian_accum: np.ndarray
    accum_count: int = 0
    precond_diag: np.ndarray | None = None
    frozen: bool = False


def init_lmc_state(p: ParamState, m: ModelSpec, rng: np.random.Generator) -> LmcState:
    momentum = rng.standard_normal(m.d + p.n_active())
    return LmcState(momentum=momentum, n_biases=m.d,
                    hessian_accum=np.zeros(m.d + m.n_edges))


def gradient_estimate(p: ParamState, data: Dataset, mom: MomentEstimates,
                      cfg: LmcConfig) -> np.ndarray:
    """Log-posterior gradient for biases and active edge values, with the
    model expectation replaced by the supplied feature means."""
    active = np.flatnonzero(p.edge_active)
    return _grad_from_means(p, data, mom.mean, cfg, active)


def _grad_from_means(p, data, mean, cfg, active):
    d = p.biases.shape[0]
    g_bias = data.suff_node - data.N * mean[:d] - p.biases / cfg.prior_var_bias
    g_edge = (data.suff_edge[active] - data.N * mean[d:][active]
              - p.edge_values[active] / cfg.prior_var_edges)
    return np.concatenate([g_bias, g_edge])


def accumulate_preconditioner(state: LmcState, mom: MomentEstimates,
                              sigma0_sq: float, sigma_b_sq: float,
                              data_n: int) -> LmcState:
    """Add one curvature observation H = N*Var f + 1/prior_var to the running mean."""
    if state.frozen:
        raise ValueError("preconditioner already frozen")
    d = state.n_biases
    H = np.empty_like(state.hessian_accum)
    H[:d] = data_n * mom.var[:d] + 1.0 / sigma_b_sq
    H[d:] = data_n * mom.var[d:] + 1.0 / sigma0_sq
    state.hessian_accum += H
    state.accum_count += 1
    return state


def freeze_preconditioner(state: LmcState) -> LmcState:
    if state.accum_count == 0:
        raise ValueError("cannot freeze before any accumulation")
    hbar = np.maximum(state.hessian_accum / state.accum_count, HESSIAN_FLOOR)
    state.precond_diag = hbar ** -0.5
    state.frozen = True
    return state


def _coord_precond(state: LmcState, active: np.ndarray) -> np.ndarray:
    d = state.n_biases
    if not state.frozen:
        return np.ones(d + active.shape[0])
    return np.concatenate([state.precond_diag[:d], state.precond_diag[d + active]])


def _refresh(state: LmcState, alpha: float, rng: np.random.Generator) -> np.ndarray:
    beta = np.sqrt(1.0 - alpha * alpha)
    return alpha * state.momentum + beta * rng.standard_normal(state.momentum.shape[0])


def _drift(p: ParamState, active: np.ndarray, delta: np.ndarray) -> ParamState:
    d = p.biases.shape[0]
    out = p.copy()
    out.biases = p.biases + delta[:d]
    out.edge_values[active] += delta[d:]
    return out


def lmc_step(p: ParamState, state: LmcState, grad_fn, cfg: LmcConfig,
             rng: np.random.Generator):
    """One refresh-then-leapfrog update, no accept/reject."""
    active = np.flatnonzero(p.edge_active)
    if state.momentum.shape[0] != state.n_biases + active.shape[0]:
        raise ValueError("momentum is not aligned with the active coordinates")
    C = _coord_precond(state, active)
    eps = cfg.step_size
    pm = _refresh(state, cfg.refresh_alpha, rng)
    pm = pm + 0.5 * eps * C * grad_fn(p)
    p2 = _drift(p, active, eps * C * pm)
    pm = pm + 0.5 * eps * C * grad_fn(p2)
    state.momentum = pm
    return p2, state


def log_posterior_terms(p: ParamState, data: Dataset, logz: float,
                        sigma0_sq: float, sigma_b_sq: float) -> float:
    """Log posterior over continuous parameters at fixed structure, up to a
    theta-independent constant."""
    active = np.flatnonzero(p.edge_active)
    av = p.edge_values[active]
    return float(p.biases @ data.suff_node + av @ data.suff_edge[active]
                 - data.N * logz
                 - 0.5 * (p.biases @ p.biases) / sigma_b_sq
                 - 0.5 * (av @ av) / sigma0_sq)


def exact_log_posterior(p: ParamState, m: ModelSpec, data: Dataset,
                        sigma0_sq: float, sigma_b_sq: float) -> float:
    from ssmrf.mrf_core import exact_log_partition

    return log_posterior_terms(p, data, exact_log_partition(p, m),
                               sigma0_sq, sigma_b_sq)


def lmc_step_exact(p: ParamState, state: LmcState, m: ModelSpec, data: Dataset,
                   cfg: LmcConfig, rng: np.random.Generator,
                   table: ExactTable | None = None):
    """Leapfrog with enumerated moments plus a Metropolis correction.

    Returns (new params, accepted).  The refreshed momentum is kept on
    acceptance and negated on rejection.  When a table is passed it must
    be synced to p; it is left synced to the returned state.
    """
    if table is None:
        table = ExactTable(m)
        table.set_params(p)
    active = np.flatnonzero(p.edge_active)
    if state.momentum.shape[0] != state.n_biases + active.shape[0]:
        raise ValueError("momentum is not aligned with the active coordinates")
    C = _coord_precond(state, active)
    eps = cfg.step_size

    pm0 = _refresh(state, cfg.refresh_alpha, rng)
    g1 = _grad_from_means(p, data, table.feature_means(), cfg, active)
    pm = pm0 + 0.5 * eps * C * g1
    p2 = _drift(p, active, eps * C * pm)
    logw2, logz2 = table.trial_logw(p2)
    mx = logw2.max()
    w2 = np.exp(logw2 - mx)
    probs2 = w2 / w2.sum()
    g2 = _grad_from_means(p2, data, probs2 @ table.F, cfg, active)
    pm = pm + 0.5 * eps * C * g2

    lp_old = log_posterior_terms(p, data, table.logz, cfg.prior_var_edges,
                                 cfg.prior_var_bias)
    lp_new = log_posterior_terms(p2, data, logz2, cfg.prior_var_edges,
                                 cfg.prior_var_bias)
    dh = (lp_old - lp_new) + 0.5 * (pm @ pm - pm0 @ pm0)
    if np.log(rng.random()) < -dh:
        table.commit_logw(logw2, logz2, probs=probs2)
        state.momentum = pm
        return p2, True
    state.momentum = -pm0
    return p, False


def realign_momentum(state: LmcState, old_active: np.ndarray,
                     new_active: np.ndarray, rng: np.random.Generator) -> LmcState:
    """Carry momentum of surviving edges, draw fresh entries for added ones
    (in candidate order), drop entries of deleted ones."""
    d = state.n_biases
    old_edges = state.momentum[d:]
    keep = np.isin(new_active, old_active)
    new_edges = np.empty(new_active.shape[0])
    if keep.any():
        new_edges[keep] = old_edges[np.searchsorted(old_active, new_active[keep])]
    n_fresh = int((~keep).sum())
    if n_fresh:
        new_edges[~keep] = rng.standard_normal(n_fresh)
    state.momentum = np.concatenate([state.momentum[:d], new_edges])
    return state
