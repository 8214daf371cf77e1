"""Full posterior chain: hyperparameters, moment refresh, one Langevin
leapfrog, then a trans-dimensional sweep, emitting thinned samples."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.random import SeedSequence, default_rng

from ssmrf.gibbs import MomentEstimates, estimate_moments, gibbs_sweep, init_chains
from ssmrf.hyper import HyperPriors, HyperState, sample_p0, sample_sigma0
from ssmrf.langevin import (
    LmcConfig,
    accumulate_preconditioner,
    freeze_preconditioner,
    gradient_estimate,
    init_lmc_state,
    lmc_step,
    lmc_step_exact,
    realign_momentum,
)
from ssmrf.mrf_core import MAX_ENUM_NODES, Dataset, ExactTable, ModelSpec, ParamState
from ssmrf.rjmcmc import compute_jump_widths, exact_sweep, parallel_sweep

INIT_BIAS_SD = 0.5
INIT_EDGE_SD = 0.5
APPROX_DEFAULTS = {"step": 1e-3, "refresh": 0.9, "width_scale": 1.0}
EXACT_DEFAULTS = {"step": 1e-2, "refresh": 0.95, "width_scale": 10.0}


@dataclass
class RunConfig:
    """Chain settings; step, refresh, and width_scale default per mode."""

    iters: int
    n_chains: int = 100
    n_gibbs: int = 1
    step: float | None = None
    refresh: float | None = None
    width_scale: float | None = None
    burn_in: int = 0
    thin: int = 1
    keep: int | None = None
    mode: str = "approximate"
    seed: int = 0
    priors: HyperPriors = field(default_factory=HyperPriors)
    fixed_p0: float | None = None
    rj_enabled: bool = True
    init_state: ParamState | None = None

    def __post_init__(self):
        if self.mode not in ("approximate", "exact"):
            raise ValueError("mode must be 'approximate' or 'exact'")
        if self.iters < 1:
            raise ValueError("iters must be at least 1")
        if self.n_chains < 2:
            raise ValueError("need at least 2 chains")
        if self.n_gibbs < 1:
            raise ValueError("n_gibbs must be at least 1")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if not 0 <= self.burn_in < self.iters:
            raise ValueError("burn_in must lie in [0, iters)")
        if self.keep is not None and self.keep < 0:
            raise ValueError("keep must be nonnegative")
        if self.resolved_keep() * self.thin > self.iters - self.burn_in:
            raise ValueError("keep*thin exceeds the post-burn-in budget")
        if self.fixed_p0 is not None and not 0.0 < self.fixed_p0 < 1.0:
            raise ValueError("fixed_p0 must lie in (0, 1)")
        defaults = EXACT_DEFAULTS if self.mode == "exact" else APPROX_DEFAULTS
        if self.step is None:
            self.step = defaults["step"]
        if self.refresh is None:
            self.refresh = defaults["refresh"]
        if self.width_scale is None:
            self.width_scale = defaults["width_scale"]
        if self.step <= 0:
            raise ValueError("step must be positive")
        if not 0.0 <= self.refresh < 1.0:
            raise ValueError("refresh must lie in [0, 1)")
        if self.width_scale <= 0:
            raise ValueError("width_scale must be positive")

    def resolved_keep(self) -> int:
        if self.keep is not None:
            return self.keep
        return (self.iters - self.burn_in) // self.thin


@dataclass(frozen=True)
class PosteriorSample:
    iteration: int
    y: np.ndarray
    a: np.ndarray
    biases: np.ndarray
    p0: float
    sigma0_sq: float


def _init_params(m: ModelSpec, cfg: RunConfig, rng: np.random.Generator) -> ParamState:
    if cfg.init_state is not None:
        p = cfg.init_state.copy()
        if p.biases.shape != (m.d,) or p.edge_values.shape != (m.n_edges,):
            raise ValueError("init_state does not match the candidate set")
        return p
    p = ParamState.zeros(m)
    p.biases[:] = rng.normal(0.0, INIT_BIAS_SD, m.d)
    y = rng.random(m.n_edges) < 0.5
    p.edge_active[:] = y.astype(np.uint8)
    p.edge_values[y] = rng.normal(0.0, INIT_EDGE_SD, int(y.sum()))
    return p


def _emit(t: int, p: ParamState, hyper: HyperState) -> PosteriorSample:
    active = p.edge_active == 1
    return PosteriorSample(
        iteration=t,
        y=p.edge_active.copy(),
        a=p.edge_values[active].copy(),
        biases=p.biases.copy(),
        p0=hyper.p0,
        sigma0_sq=hyper.sigma0_sq,
    )


def run(data: Dataset, m: ModelSpec, cfg: RunConfig):
    """Generate RunConfig.keep posterior samples (lazily)."""
    if cfg.mode == "exact":
        yield from run_exact(data, m, cfg)
        return

    ss = SeedSequence(cfg.seed)
    ss_init, ss_chains, ss_loop = ss.spawn(3)
    rng_init = default_rng(ss_init)
    rng_loop = default_rng(ss_loop)

    p = _init_params(m, cfg, rng_init)
    lmc_state = init_lmc_state(p, m, rng_init)
    bank = init_chains(m, cfg.n_chains, ss_chains)
    widths = compute_jump_widths(data, m)
    keep = cfg.resolved_keep()
    sigma_b_sq = cfg.priors.sigma_b**2
    emitted = 0

    for t in range(1, cfg.iters + 1):
        if cfg.fixed_p0 is not None:
            p0 = cfg.fixed_p0
        else:
            p0 = float(sample_p0(p.edge_active, cfg.priors, rng_loop))
        s0 = float(sample_sigma0(p.edge_active, p.edge_values, cfg.priors, rng_loop))
        hyper = HyperState(p0=p0, sigma0_sq=s0, fixed_p0=cfg.fixed_p0)

        gibbs_sweep(bank, p, m, cfg.n_gibbs)
        mom = estimate_moments(bank, m)

        if t <= cfg.burn_in:
            accumulate_preconditioner(lmc_state, mom, s0, sigma_b_sq, data.N)
            if t == cfg.burn_in:
                freeze_preconditioner(lmc_state)

        lcfg = LmcConfig(step_size=cfg.step, refresh_alpha=cfg.refresh,
                         prior_var_edges=s0, prior_var_bias=sigma_b_sq)
        p, lmc_state = lmc_step(
            p, lmc_state, lambda q: gradient_estimate(q, data, mom, lcfg),
            lcfg, rng_loop)

        if cfg.rj_enabled:
            old_active = np.flatnonzero(p.edge_active)
            p = parallel_sweep(p, data, mom, hyper, widths, rng_loop,
                               cfg.width_scale)
            realign_momentum(lmc_state, old_active,
                             np.flatnonzero(p.edge_active), rng_loop)

        if t > cfg.burn_in and (t - cfg.burn_in) % cfg.thin == 0 and emitted < keep:
            yield _emit(t, p, hyper)
            emitted += 1


def run_exact(data: Dataset, m: ModelSpec, cfg: RunConfig):
    """Same loop with enumerated moments, a Metropolis-corrected leapfrog,
    and exact partition ratios in the edge moves; no chain bank."""
    if m.d > MAX_ENUM_NODES:
        raise ValueError("exact mode requires d <= %d" % MAX_ENUM_NODES)

    ss = SeedSequence(cfg.seed)
    ss_init, _ss_chains, ss_loop = ss.spawn(3)
    rng_init = default_rng(ss_init)
    rng_loop = default_rng(ss_loop)

    p = _init_params(m, cfg, rng_init)
    lmc_state = init_lmc_state(p, m, rng_init)
    table = ExactTable(m)
    table.set_params(p)
    widths = compute_jump_widths(data, m)
    keep = cfg.resolved_keep()
    sigma_b_sq = cfg.priors.sigma_b**2
    emitted = 0

    for t in range(1, cfg.iters + 1):
        if cfg.fixed_p0 is not None:
            p0 = cfg.fixed_p0
        else:
            p0 = float(sample_p0(p.edge_active, cfg.priors, rng_loop))
        s0 = float(sample_sigma0(p.edge_active, p.edge_values, cfg.priors, rng_loop))
        hyper = HyperState(p0=p0, sigma0_sq=s0, fixed_p0=cfg.fixed_p0)

        if t <= cfg.burn_in:
            mean = table.feature_means()
            mom = MomentEstimates(mean=mean, var=mean * (1.0 - mean), n=2)
            accumulate_preconditioner(lmc_state, mom, s0, sigma_b_sq, data.N)
            if t == cfg.burn_in:
                freeze_preconditioner(lmc_state)

        lcfg = LmcConfig(step_size=cfg.step, refresh_alpha=cfg.refresh,
                         prior_var_edges=s0, prior_var_bias=sigma_b_sq)
        p, _accepted = lmc_step_exact(p, lmc_state, m, data, lcfg, rng_loop,
                                      table=table)

        if cfg.rj_enabled:
            old_active = np.flatnonzero(p.edge_active)
            p = exact_sweep(p, table, data, hyper, widths, rng_loop,
                            cfg.width_scale)
            realign_momentum(lmc_state, old_active,
                             np.flatnonzero(p.edge_active), rng_loop)

        if t > cfg.burn_in and (t - cfg.burn_in) % cfg.thin == 0 and emitted < keep:
            yield _emit(t, p, hyper)
            emitted += 1
