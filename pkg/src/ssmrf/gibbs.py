"""Persistent Gibbs chains and the sample moments computed from them.

A bank of n chains is carried across sampler iterations; each chain owns
an independent random stream, and uniforms are pre-drawn in blocks per
chain (block draws consume each stream in the same order as one-at-a-time
draws, so trajectories are reproducible either way).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ssmrf import kernels
from ssmrf.mrf_core import ModelSpec, ParamState


@dataclass
class MomentEstimates:
    """Per-feature sample mean and (n-1)-divisor variance over a chain bank.

    Layout matches the feature order: d node features then candidate edges.
    """

    mean: np.ndarray
    var: np.ndarray
    n: int


@dataclass
class ChainBank:
    states: np.ndarray
    streams: list
    _ubuf: np.ndarray | None = field(default=None, repr=False)
    _ucur: int = field(default=0, repr=False)

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def d(self) -> int:
        return self.states.shape[1]


def init_chains(m: ModelSpec, n: int, seed) -> ChainBank:
    """n chains started i.i.d. uniform over states, one stream per chain."""
    if n < 2:
        raise ValueError("need at least 2 chains for sample variances")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    streams = [np.random.default_rng(child) for child in ss.spawn(n)]
    states = np.empty((n, m.d), dtype=np.uint8)
    for c in range(n):
        states[c] = streams[c].random(m.d) < 0.5
    return ChainBank(states=states, streams=streams)


def build_adjacency(p: ParamState, m: ModelSpec):
    """CSR neighbor lists over active edges; per-node order is fixed by the
    candidate-edge order, so compiled and fallback lanes scan identically."""
    act = np.flatnonzero(p.edge_active)
    ei = m.edge_i[act]
    ej = m.edge_j[act]
    w = p.edge_values[act]
    src = np.concatenate([ei, ej])
    dst = np.concatenate([ej, ei])
    ww = np.concatenate([w, w])
    order = np.argsort(src, kind="stable")
    counts = np.bincount(src, minlength=m.d)
    indptr = np.zeros(m.d + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, dst[order], ww[order]


def _refill(bank: ChainBank, block: int):
    if bank._ubuf is None or bank._ubuf.shape[1] != block:
        bank._ubuf = np.empty((bank.n, block, bank.d))
    for c in range(bank.n):
        bank._ubuf[c] = bank.streams[c].random((block, bank.d))
    bank._ucur = 0


def gibbs_sweep(bank: ChainBank, p: ParamState, m: ModelSpec, sweeps: int) -> ChainBank:
    """Advance every chain by `sweeps` full systematic scans, in place."""
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    indptr, nbr, wts = build_adjacency(p, m)
    bank.states = np.ascontiguousarray(bank.states, dtype=np.uint8)
    block = max(1, min(256, (1 << 21) // max(1, bank.n * bank.d)))
    left = sweeps
    while left > 0:
        if bank._ubuf is None or bank._ucur >= bank._ubuf.shape[1]:
            _refill(bank, block)
        take = min(left, bank._ubuf.shape[1] - bank._ucur)
        kernels.gibbs_sweeps(bank.states, indptr, nbr, wts, p.biases,
                             bank._ubuf, bank._ucur, take)
        bank._ucur += take
        left -= take
    return bank


def estimate_moments(bank: ChainBank, m: ModelSpec) -> MomentEstimates:
    """Feature means over the bank with exact (n-1)-divisor variances.

    Features are 0/1, so the sample variance reduces to n*fbar*(1-fbar)/(n-1).
    """
    n = bank.n
    X = bank.states.astype(np.float64)
    node_mean = X.mean(axis=0)
    G = (X.T @ X) / n
    edge_mean = G[m.edge_i, m.edge_j]
    mean = np.concatenate([node_mean, edge_mean])
    var = mean * (1.0 - mean) * (n / (n - 1.0))
    return MomentEstimates(mean=mean, var=var, n=n)
