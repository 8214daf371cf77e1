"""Trans-dimensional edge moves over the candidate set.

An inactive edge receives an add proposal drawn from a truncated-Gaussian
fit of the local posterior; an active edge whose value sits inside the
jump window receives a delete proposal.  The data's partition-function
ratio is either estimated to second order from chain-bank moments (the
approximate path, all edges decided in one vectorized sweep with
pre-assigned uniforms) or computed exactly from an enumerated table (the
exact path, edges decided sequentially).

Uniform consumption is identical for both sweeps: one block of per-edge
value uniforms, then one block of per-edge acceptance uniforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtri_exp

from ssmrf.gibbs import MomentEstimates
from ssmrf.hyper import HyperState
from ssmrf.mrf_core import Dataset, ExactTable, ModelSpec, ParamState

VAR_FLOOR = 1e-4
S2_FLOOR = 1e-12
_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class JumpWidths:
    """Per-candidate-edge half-width of the proposal support."""

    delta: np.ndarray


@dataclass(frozen=True)
class ProposalCoeffs:
    """Quadratic fit exp(-quad*a^2/2 + lin*a) truncated to [-width, width]."""

    quad: float
    lin: float
    width: float


def compute_jump_widths(data: Dataset, m: ModelSpec) -> JumpWidths:
    """0.01 / sqrt(N * Var f) per edge, with the data variance floored.

    An empty dataset gets unit widths (no data scale to shrink by).
    """
    if data.N == 0:
        return JumpWidths(delta=np.ones(m.n_edges))
    fbar = data.suff_edge / data.N
    var = np.maximum(fbar * (1.0 - fbar), VAR_FLOOR)
    return JumpWidths(delta=0.01 / np.sqrt(data.N * var))


def proposal_coeffs(e: int, mom: MomentEstimates, data: Dataset,
                    sigma0_sq: float, N: int, mode: str,
                    current_a: float = 0.0, widths: JumpWidths | None = None,
                    width_scale: float = 1.0) -> ProposalCoeffs:
    """Local quadratic fit of the posterior over a candidate edge value.

    mode "add" centers on the bank mean of the feature; mode "delete"
    shifts the mean to second order to stand in for the edge-removed model.
    """
    if mode not in ("add", "delete"):
        raise ValueError("mode must be 'add' or 'delete'")
    d = data.suff_node.shape[0]
    fbar = float(mom.mean[d + e])
    s2 = float(mom.var[d + e])
    if s2 < S2_FLOOR:
        s2 = 0.0
    kappa = 1.0 / sigma0_sq + N * s2
    ehat = fbar if mode == "add" else fbar - current_a * s2
    lam = float(data.suff_edge[e]) - N * ehat
    width = float(widths.delta[e]) * width_scale if widths is not None else np.inf
    return ProposalCoeffs(quad=kappa, lin=lam, width=width)


# ------------------------------------------------------------ truncated normal

def _logdiff_ndtr(zl, zh):
    """log(Phi(zh) - Phi(zl)), stable in either tail via reflection."""
    zl = np.asarray(zl, dtype=np.float64)
    zh = np.asarray(zh, dtype=np.float64)
    flip = (zl + zh) > 0
    a = np.where(flip, -zh, zl)
    b = np.where(flip, -zl, zh)
    la = log_ndtr(a)
    lb = log_ndtr(b)
    diff = np.minimum(la - lb, -1e-17)
    return lb + np.log(-np.expm1(diff))


def _trunc_ppf(u, loc, scale, width):
    """Inverse CDF of Normal(loc, scale) truncated to [-width, width]."""
    u = np.asarray(u, dtype=np.float64)
    zl = (-width - loc) / scale
    zh = (width - loc) / scale
    flip = (zl + zh) > 0
    a = np.where(flip, -zh, zl)
    b = np.where(flip, -zl, zh)
    uu = np.where(flip, 1.0 - u, u)
    la = log_ndtr(a)
    lb = log_ndtr(b)
    lcdf = lb + np.log(uu + (1.0 - uu) * np.exp(np.minimum(la - lb, 0.0)))
    z = ndtri_exp(np.minimum(lcdf, 0.0))
    x = np.where(flip, loc - scale * z, loc + scale * z)
    return np.clip(x, -width, width)


def _trunc_logpdf(a, loc, scale, width):
    a = np.asarray(a, dtype=np.float64)
    z = (a - loc) / scale
    lognorm = _logdiff_ndtr((-width - loc) / scale, (width - loc) / scale)
    val = -0.5 * z * z - 0.5 * _LOG_2PI - np.log(scale) - lognorm
    return np.where(np.abs(a) <= width * (1.0 + 1e-12), val, -np.inf)


def sample_truncated_gaussian(c: ProposalCoeffs, rng: np.random.Generator):
    """One draw from the fitted proposal plus its normalized log-density."""
    if c.quad <= 0:
        raise ValueError("quadratic coefficient must be positive")
    loc = c.lin / c.quad
    scale = c.quad ** -0.5
    a = float(_trunc_ppf(rng.random(), loc, scale, c.width))
    return a, float(_trunc_logpdf(a, loc, scale, c.width))


def truncated_logpdf(c: ProposalCoeffs, a: float) -> float:
    return float(_trunc_logpdf(a, c.lin / c.quad, c.quad ** -0.5, c.width))


# ------------------------------------------------------------ ratio estimator

def _log_r_tilde(a, fbar, s2, N, n):
    s2 = np.where(np.asarray(s2) < S2_FLOOR, 0.0, s2)
    return (-N * a * fbar - 0.5 * N * a * a * s2
            - np.log1p((N * N * a * a / (2.0 * n)) * s2))


def r_tilde(a: float, fbar: float, s2: float, N: int, n: int) -> float:
    """Second-order estimate of the N-th power of the partition ratio under
    adding `a` on one edge; pass -a for the delete direction."""
    if n < 2:
        raise ValueError("need at least 2 moment samples")
    return float(np.exp(_log_r_tilde(a, fbar, s2, N, n)))


def slab_logpdf(a, sigma0_sq):
    return -0.5 * np.asarray(a) ** 2 / sigma0_sq - 0.5 * np.log(2.0 * np.pi * sigma0_sq)


# ------------------------------------------------------------ acceptance

def _log_odds(p0: float) -> float:
    return float(np.log(p0) - np.log1p(-p0))


def acceptance_add(e: int, a: float, log_q: float, p: ParamState, data: Dataset,
                   mom: MomentEstimates, hyper: HyperState, widths: JumpWidths,
                   width_scale: float = 1.0) -> float:
    """Probability of accepting the addition of edge e with value a."""
    if p.edge_active[e]:
        raise ValueError("edge already active")
    width = widths.delta[e] * width_scale
    if abs(a) > width * (1.0 + 1e-12):
        raise ValueError("proposal outside the jump window")
    d = p.biases.shape[0]
    lstar = (a * data.suff_edge[e]
             + _log_r_tilde(a, mom.mean[d + e], mom.var[d + e], data.N, mom.n)
             + _log_odds(hyper.p0)
             + slab_logpdf(a, hyper.sigma0_sq) - log_q)
    return float(np.exp(min(lstar, 0.0)))


def acceptance_delete(e: int, p: ParamState, data: Dataset, mom: MomentEstimates,
                      hyper: HyperState, widths: JumpWidths,
                      log_q_current: float, width_scale: float = 1.0) -> float:
    """Probability of accepting the deletion of active edge e; log_q_current
    is the delete-mode proposal density of its current value."""
    if not p.edge_active[e]:
        raise ValueError("edge not active")
    a = float(p.edge_values[e])
    width = widths.delta[e] * width_scale
    if abs(a) > width * (1.0 + 1e-12):
        raise ValueError("edge value outside the jump window")
    d = p.biases.shape[0]
    lstar = (-a * data.suff_edge[e]
             + _log_r_tilde(-a, mom.mean[d + e], mom.var[d + e], data.N, mom.n)
             - _log_odds(hyper.p0)
             + log_q_current - slab_logpdf(a, hyper.sigma0_sq))
    return float(np.exp(min(lstar, 0.0)))


def parallel_sweep(p: ParamState, data: Dataset, mom: MomentEstimates,
                   hyper: HyperState, widths: JumpWidths,
                   rng: np.random.Generator, width_scale: float = 1.0) -> ParamState:
    """Decide every candidate edge once, all from the shared moment set.

    Uniforms are pre-assigned (one value array, one acceptance array), so
    the vectorized decisions equal sequential index-order execution.
    """
    E = p.edge_values.shape[0]
    d = p.biases.shape[0]
    u_val = rng.random(E)
    u_acc = rng.random(E)
    if E == 0:
        return p.copy()
    deltas = widths.delta * width_scale
    N = data.N
    suff = data.suff_edge
    fbar = mom.mean[d:]
    s2 = np.where(mom.var[d:] < S2_FLOOR, 0.0, mom.var[d:])
    kappa = 1.0 / hyper.sigma0_sq + N * s2
    scale = kappa ** -0.5
    lodds = _log_odds(hyper.p0)
    log_u = np.log(u_acc)

    inactive = p.edge_active == 0
    av = p.edge_values
    eligible_del = (~inactive) & (np.abs(av) <= deltas)

    loc_add = (suff - N * fbar) / kappa
    a_prop = _trunc_ppf(u_val, loc_add, scale, deltas)
    logq_add = _trunc_logpdf(a_prop, loc_add, scale, deltas)
    lstar_add = (a_prop * suff + _log_r_tilde(a_prop, fbar, s2, N, mom.n)
                 + lodds + slab_logpdf(a_prop, hyper.sigma0_sq) - logq_add)
    acc_add = inactive & (log_u < np.minimum(lstar_add, 0.0))

    loc_del = (suff - N * (fbar - av * s2)) / kappa
    logq_del = _trunc_logpdf(av, loc_del, scale, deltas)
    lstar_del = (-av * suff + _log_r_tilde(-av, fbar, s2, N, mom.n)
                 - lodds + logq_del - slab_logpdf(av, hyper.sigma0_sq))
    acc_del = eligible_del & (log_u < np.minimum(lstar_del, 0.0))

    out = p.copy()
    out.edge_active[acc_add] = 1
    out.edge_values[acc_add] = a_prop[acc_add]
    out.edge_active[acc_del] = 0
    out.edge_values[acc_del] = 0.0
    return out


# ------------------------------------------------------------ exact path

def exact_add_logq_star(a, log_q, suff_e, mu, N, hyper: HyperState):
    """Log acceptance ratio for adding value a when the edge-feature mean mu
    under the current model is exact.  Array-generic."""
    dz = np.log1p(mu * np.expm1(a))
    return (a * suff_e - N * dz + _log_odds(hyper.p0)
            + slab_logpdf(a, hyper.sigma0_sq) - log_q)


def exact_delete_logq_star(a, suff_e, mu_with, N, hyper: HyperState, width):
    """Log acceptance ratio for deleting an edge with value a, given its
    exact feature mean under the current (edge-present) model.

    The reverse add proposal is evaluated at the edge-removed model, whose
    feature mean follows from the exact tilt identity.  Array-generic.
    """
    em = np.exp(-a)
    denom = 1.0 - mu_with + mu_with * em
    mu0 = mu_with * em / denom
    s2_0 = mu0 * (1.0 - mu0)
    kappa0 = 1.0 / hyper.sigma0_sq + N * s2_0
    loc0 = (suff_e - N * mu0) / kappa0
    logq0 = _trunc_logpdf(a, loc0, kappa0 ** -0.5, width)
    return (-a * suff_e - N * np.log(denom) - _log_odds(hyper.p0)
            + logq0 - slab_logpdf(a, hyper.sigma0_sq))


def exact_sweep(p: ParamState, table: ExactTable, data: Dataset,
                hyper: HyperState, widths: JumpWidths,
                rng: np.random.Generator, width_scale: float = 1.0) -> ParamState:
    """Sequential index-order pass with exact partition ratios.

    The table must be synced to p on entry and tracks every accepted flip.
    Decisions for edges after a flip see the updated model, so detailed
    balance holds edge by edge.
    """
    E = p.edge_values.shape[0]
    d = p.biases.shape[0]
    u_val = rng.random(E)
    u_acc = rng.random(E)
    if E == 0:
        return p.copy()
    log_u = np.log(u_acc)
    deltas = widths.delta * width_scale
    N = data.N
    suff = data.suff_edge
    out = p.copy()

    start = 0
    while start < E:
        sl = slice(start, E)
        mu = table.edge_means_from(start)
        inactive = out.edge_active[sl] == 0
        av = out.edge_values[sl]

        s2 = mu * (1.0 - mu)
        kappa = 1.0 / hyper.sigma0_sq + N * s2
        scale = kappa ** -0.5
        loc = (suff[sl] - N * mu) / kappa
        a_prop = _trunc_ppf(u_val[sl], loc, scale, deltas[sl])
        logq = _trunc_logpdf(a_prop, loc, scale, deltas[sl])
        lstar_add = exact_add_logq_star(a_prop, logq, suff[sl], mu, N, hyper)
        acc_add = inactive & (log_u[sl] < np.minimum(lstar_add, 0.0))

        eligible = (~inactive) & (np.abs(av) <= deltas[sl])
        with np.errstate(invalid="ignore", divide="ignore"):
            lstar_del = exact_delete_logq_star(av, suff[sl], mu, N, hyper, deltas[sl])
        acc_del = eligible & (log_u[sl] < np.minimum(lstar_del, 0.0))

        flips = np.flatnonzero(acc_add | acc_del)
        if flips.shape[0] == 0:
            break
        k = int(flips[0])
        e = start + k
        if acc_add[k]:
            val = float(a_prop[k])
            table.apply_edge_delta(e, val)
            out.edge_active[e] = 1
            out.edge_values[e] = val
        else:
            table.apply_edge_delta(e, -float(av[k]))
            out.edge_active[e] = 0
            out.edge_values[e] = 0.0
        start = e + 1
    return out
