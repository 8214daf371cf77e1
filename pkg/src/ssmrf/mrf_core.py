"""Pairwise binary Markov random fields.

States are {0,1}^d vectors.  The log density is sum_i b_i*x_i plus
sum over active candidate edges (i,j) of w_ij*x_i*x_j, minus log Z.
Couplings live on a fixed, ordered candidate edge set and are gated
by per-edge indicator bits, so a model and its structure are carried
around as one parameter state.

Exact routines (full enumeration, column transfer matrix) are capped
to small models; they back ground-truth generation, scoring, and the
exact sampling path.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

MAX_ENUM_NODES = 20
MAX_TRANSFER_ROWS = 14
MAX_GROUP = 16

_CHUNK_CELLS = 1 << 22


def _all_pairs(d: int) -> tuple[tuple[int, int], ...]:
    return tuple((i, j) for i in range(d) for j in range(i + 1, d))


@dataclass(frozen=True)
class ModelSpec:
    """Node count plus the ordered universe of candidate edges.

    candidate_edges holds (i, j) pairs with i < j.  lattice_dims tags the
    node set as a rows-by-cols grid (node (r, c) is index r*cols + c); a
    grid spec always carries the complete pair universe as candidates.
    """

    d: int
    candidate_edges: tuple[tuple[int, int], ...]
    lattice_dims: tuple[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(
            self, "candidate_edges",
            tuple((int(i), int(j)) for i, j in self.candidate_edges))
        if self.lattice_dims is not None:
            r, c = self.lattice_dims
            object.__setattr__(self, "lattice_dims", (int(r), int(c)))
        seen = set()
        for i, j in self.candidate_edges:
            if not 0 <= i < j < self.d:
                raise ValueError(f"bad candidate edge ({i}, {j}) for d={self.d}")
            if (i, j) in seen:
                raise ValueError(f"duplicate candidate edge ({i}, {j})")
            seen.add((i, j))
        if self.lattice_dims is not None:
            r, c = self.lattice_dims
            if r < 1 or c < 1 or r * c != self.d:
                raise ValueError("lattice dims inconsistent with node count")
            if self.candidate_edges != _all_pairs(self.d):
                raise ValueError("grid specs must use the complete candidate set")

    @classmethod
    def complete(cls, d: int) -> "ModelSpec":
        """All d*(d-1)/2 pairs as candidates."""
        return cls(d=d, candidate_edges=_all_pairs(d))

    @classmethod
    def lattice(cls, rows: int, cols: int) -> "ModelSpec":
        """Grid-tagged spec; candidates are still every pair."""
        return cls(d=rows * cols, candidate_edges=_all_pairs(rows * cols),
                   lattice_dims=(rows, cols))

    @property
    def n_edges(self) -> int:
        return len(self.candidate_edges)

    @cached_property
    def edge_i(self) -> np.ndarray:
        return np.array([i for i, _ in self.candidate_edges], dtype=np.int64)

    @cached_property
    def edge_j(self) -> np.ndarray:
        return np.array([j for _, j in self.candidate_edges], dtype=np.int64)

    @cached_property
    def _edge_index(self) -> dict[tuple[int, int], int]:
        return {e: k for k, e in enumerate(self.candidate_edges)}

    def edge_id(self, i: int, j: int) -> int:
        if i > j:
            i, j = j, i
        return self._edge_index[(i, j)]

    def grid_edges(self) -> tuple[tuple[int, int], ...]:
        """Nearest-neighbor pairs of the grid, (i, j) with i < j."""
        if self.lattice_dims is None:
            raise ValueError("not a grid spec")
        rows, cols = self.lattice_dims
        out = []
        for r in range(rows):
            for c in range(cols):
                n = r * cols + c
                if r + 1 < rows:
                    out.append((n, n + cols))
                if c + 1 < cols:
                    out.append((n, n + 1))
        return tuple(sorted(out))


@dataclass
class ParamState:
    """Biases, candidate-edge values, and candidate-edge indicator bits.

    The coupling actually applied on edge k is edge_values[k] *
    edge_active[k]; values of inactive edges carry no meaning.
    """

    biases: np.ndarray
    edge_values: np.ndarray
    edge_active: np.ndarray

    def __post_init__(self):
        self.biases = np.asarray(self.biases, dtype=np.float64)
        self.edge_values = np.asarray(self.edge_values, dtype=np.float64)
        self.edge_active = np.asarray(self.edge_active, dtype=np.uint8)
        if self.edge_values.shape != self.edge_active.shape:
            raise ValueError("edge_values and edge_active length mismatch")

    @classmethod
    def zeros(cls, m: ModelSpec) -> "ParamState":
        return cls(np.zeros(m.d), np.zeros(m.n_edges), np.zeros(m.n_edges, np.uint8))

    def theta_edges(self) -> np.ndarray:
        return self.edge_values * self.edge_active

    def copy(self) -> "ParamState":
        return ParamState(self.biases.copy(), self.edge_values.copy(),
                          self.edge_active.copy())

    def n_active(self) -> int:
        return int(self.edge_active.sum())


@dataclass
class Dataset:
    """N binary observations with cached per-feature sufficient statistics."""

    observations: np.ndarray
    suff_node: np.ndarray
    suff_edge: np.ndarray
    N: int

    @classmethod
    def from_observations(cls, X, m: ModelSpec) -> "Dataset":
        X = np.ascontiguousarray(X, dtype=np.uint8)
        if X.ndim != 2 or X.shape[1] != m.d:
            raise ValueError(f"observations must be N x {m.d}")
        if X.size and X.max() > 1:
            raise ValueError("observations must be 0/1")
        Xf = X.astype(np.float64)
        G = Xf.T @ Xf
        return cls(observations=X,
                   suff_node=np.diag(G).copy(),
                   suff_edge=G[m.edge_i, m.edge_j].copy(),
                   N=X.shape[0])

    def data_moments(self, m: ModelSpec) -> "Moments":
        """Empirical feature means with population variances f(1-f)."""
        if self.N == 0:
            z = np.zeros(m.d)
            ze = np.zeros(m.n_edges)
            return Moments(z, z.copy(), ze, ze.copy())
        nm = self.suff_node / self.N
        em = self.suff_edge / self.N
        return Moments(nm, nm * (1.0 - nm), em, em * (1.0 - em))


@dataclass
class Moments:
    """First and second central moments per node feature and candidate edge."""

    node_mean: np.ndarray
    node_var: np.ndarray
    edge_mean: np.ndarray
    edge_var: np.ndarray


@dataclass
class GroupQuery:
    """A small node group to score conditionally, given a full context vector."""

    group: tuple[int, ...]
    context: np.ndarray


def enumerate_states(d: int, lo: int = 0, hi: int | None = None) -> np.ndarray:
    """States lo..hi-1 of {0,1}^d as uint8 rows; bit k of the index is node k."""
    if d > MAX_ENUM_NODES:
        raise ValueError(f"enumeration capped at {MAX_ENUM_NODES} nodes")
    if hi is None:
        hi = 1 << d
    idx = np.arange(lo, hi, dtype=np.int64)
    return ((idx[:, None] >> np.arange(d, dtype=np.int64)) & 1).astype(np.uint8)


def feature_matrix(m: ModelSpec, states: np.ndarray | None = None) -> np.ndarray:
    """Feature columns per state: d node indicators then n_edges pair products."""
    if states is None:
        states = enumerate_states(m.d)
    F = np.empty((states.shape[0], m.d + m.n_edges), dtype=np.float64)
    F[:, :m.d] = states
    F[:, m.d:] = states[:, m.edge_i] * states[:, m.edge_j]
    return F


def log_unnormalized(x, p: ParamState, m: ModelSpec) -> float:
    """Energy of one state: bias terms plus active couplings."""
    x = np.asarray(x)
    if x.shape != (m.d,):
        raise ValueError(f"state must have length {m.d}")
    th = p.theta_edges()
    return float(x @ p.biases + (x[m.edge_i] * x[m.edge_j]) @ th)


def log_unnormalized_batch(X: np.ndarray, p: ParamState, m: ModelSpec) -> np.ndarray:
    X = np.asarray(X)
    th = p.theta_edges()
    out = X @ p.biases
    if m.n_edges:
        # chunk the pair-product temp; it is the only large intermediate
        step = max(1, _CHUNK_CELLS // max(1, m.n_edges))
        for lo in range(0, X.shape[0], step):
            sl = slice(lo, min(lo + step, X.shape[0]))
            out[sl] += (X[sl][:, m.edge_i] * X[sl][:, m.edge_j]) @ th
    return out


def _check_enum(d: int):
    if d > MAX_ENUM_NODES:
        raise ValueError(f"exact enumeration capped at {MAX_ENUM_NODES} nodes")


def _all_energies(p: ParamState, m: ModelSpec) -> np.ndarray:
    _check_enum(m.d)
    S = 1 << m.d
    out = np.empty(S, dtype=np.float64)
    step = max(1, _CHUNK_CELLS // max(1, m.d + m.n_edges))
    for lo in range(0, S, step):
        hi = min(lo + step, S)
        out[lo:hi] = log_unnormalized_batch(enumerate_states(m.d, lo, hi), p, m)
    return out


def exact_log_partition(p: ParamState, m: ModelSpec) -> float:
    """log Z by full enumeration (d <= 20), max-shifted."""
    return float(logsumexp(_all_energies(p, m)))


def exact_state_probs(p: ParamState, m: ModelSpec) -> np.ndarray:
    """Probability of every state, indexed by the bit-packed state integer."""
    lw = _all_energies(p, m)
    lw -= lw.max()
    w = np.exp(lw)
    return w / w.sum()


def exact_moments(p: ParamState, m: ModelSpec) -> Moments:
    """Exact feature means by enumeration; variances are f(1-f) since features are 0/1."""
    probs = exact_state_probs(p, m)
    S = probs.shape[0]
    node_mean = np.zeros(m.d)
    edge_mean = np.zeros(m.n_edges)
    step = max(1, _CHUNK_CELLS // max(1, m.d + m.n_edges))
    for lo in range(0, S, step):
        hi = min(lo + step, S)
        X = enumerate_states(m.d, lo, hi).astype(np.float64)
        pc = probs[lo:hi]
        node_mean += pc @ X
        if m.n_edges:
            edge_mean += pc @ (X[:, m.edge_i] * X[:, m.edge_j])
    return Moments(node_mean, node_mean * (1.0 - node_mean),
                   edge_mean, edge_mean * (1.0 - edge_mean))


def enumerate_sample(p: ParamState, m: ModelSpec, n: int,
                     rng: np.random.Generator) -> np.ndarray:
    """n exact draws by inverse CDF over the enumerated state table."""
    probs = exact_state_probs(p, m)
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, rng.random(n), side="right")
    idx = np.minimum(idx, probs.shape[0] - 1)
    return ((idx[:, None] >> np.arange(m.d, dtype=np.int64)) & 1).astype(np.uint8)


def conditional_log_likelihood_rows(p: ParamState, m: ModelSpec,
                                    rows: np.ndarray, group) -> np.ndarray:
    """log P(group assignment | rest) for each row, scoring the row's own values.

    Enumerates the 2^|group| completions; only terms touching the group are
    kept, everything else cancels in the ratio.
    """
    g = np.asarray(group, dtype=np.int64)
    k = g.shape[0]
    if k == 0 or k > MAX_GROUP:
        raise ValueError(f"group size must be 1..{MAX_GROUP}")
    if len(set(g.tolist())) != k or g.min() < 0 or g.max() >= m.d:
        raise ValueError("group indices must be distinct and in range")
    rows = np.asarray(rows)
    if rows.ndim != 2 or rows.shape[1] != m.d:
        raise ValueError(f"rows must be n x {m.d}")

    pos = {int(node): t for t, node in enumerate(g)}
    th = p.theta_edges()
    W = np.zeros((m.d, k))
    intra_t1, intra_t2, intra_w = [], [], []
    for e, (i, j) in enumerate(m.candidate_edges):
        w = th[e]
        if w == 0.0:
            continue
        ti, tj = pos.get(i), pos.get(j)
        if ti is not None and tj is not None:
            intra_t1.append(ti)
            intra_t2.append(tj)
            intra_w.append(w)
        elif ti is not None:
            W[j, ti] += w
        elif tj is not None:
            W[i, tj] += w

    gstates = enumerate_states(k).astype(np.float64)
    state_e = np.zeros(1 << k)
    if intra_w:
        t1 = np.array(intra_t1)
        t2 = np.array(intra_t2)
        state_e = (gstates[:, t1] * gstates[:, t2]) @ np.array(intra_w)

    eff = rows @ W + p.biases[g]
    obs_idx = rows[:, g].astype(np.int64) @ (np.int64(1) << np.arange(k, dtype=np.int64))
    n = rows.shape[0]
    out = np.empty(n)
    step = max(1, _CHUNK_CELLS // (1 << k))
    for lo in range(0, n, step):
        hi = min(lo + step, n)
        lw = eff[lo:hi] @ gstates.T + state_e
        out[lo:hi] = lw[np.arange(hi - lo), obs_idx[lo:hi]] - logsumexp(lw, axis=1)
    return out


def conditional_log_likelihood(p: ParamState, m: ModelSpec, q: GroupQuery) -> float:
    ctx = np.asarray(q.context)
    return float(conditional_log_likelihood_rows(p, m, ctx[None, :], q.group)[0])


def _transfer_parts(p: ParamState, m: ModelSpec):
    """Per-column single-site energies and adjacent-column coupling matrices."""
    if m.lattice_dims is None:
        raise ValueError("transfer matrix needs a grid spec")
    rows, cols = m.lattice_dims
    if rows > MAX_TRANSFER_ROWS:
        raise ValueError(f"transfer matrix capped at {MAX_TRANSFER_ROWS} rows")
    th = p.theta_edges()
    intra = [[] for _ in range(cols)]
    inter = [np.zeros((rows, rows)) for _ in range(max(0, cols - 1))]
    for e, (i, j) in enumerate(m.candidate_edges):
        w = th[e]
        if w == 0.0:
            continue
        ri, ci = divmod(i, cols)
        rj, cj = divmod(j, cols)
        if ci == cj:
            intra[ci].append((ri, rj, w))
        elif abs(ci - cj) == 1:
            if ci < cj:
                inter[ci][ri, rj] += w
            else:
                inter[cj][rj, ri] += w
        else:
            raise ValueError(f"active edge ({i}, {j}) spans non-adjacent columns")

    # bit r of a column state is the row-r node value
    B = ((np.arange(1 << rows, dtype=np.int64)[:, None]
          >> np.arange(rows, dtype=np.int64)) & 1).astype(np.float64)
    phi = []
    for c in range(cols):
        b_col = p.biases[np.arange(rows) * cols + c]
        e = B @ b_col
        for r1, r2, w in intra[c]:
            e += w * B[:, r1] * B[:, r2]
        phi.append(e)
    return B, phi, inter


def _transfer_forward(B, phi, inter):
    """Filtered log messages per column, left to right."""
    nstates = B.shape[0]
    chunk = min(nstates, max(256, _CHUNK_CELLS // nstates))
    msgs = [phi[0]]
    for c in range(len(phi) - 1):
        W = B @ inter[c]
        prev = msgs[-1]
        nxt = np.empty(nstates)
        for lo in range(0, nstates, chunk):
            hi = min(lo + chunk, nstates)
            pair = prev[:, None] + W @ B[lo:hi].T
            nxt[lo:hi] = logsumexp(pair, axis=0)
        msgs.append(nxt + phi[c + 1])
    return msgs


def transfer_matrix_log_partition(p: ParamState, m: ModelSpec) -> float:
    """log Z of a grid-structured model by column transfer in the log domain."""
    B, phi, inter = _transfer_parts(p, m)
    msgs = _transfer_forward(B, phi, inter)
    return float(logsumexp(msgs[-1]))


def _sample_from_logits(logits: np.ndarray, u: np.ndarray) -> np.ndarray:
    lw = logits - logits.max()
    w = np.exp(lw)
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, logits.shape[0] - 1)


def transfer_matrix_sample(p: ParamState, m: ModelSpec, n: int,
                           rng: np.random.Generator) -> np.ndarray:
    """n exact grid-model draws by forward filtering, backward sampling."""
    B, phi, inter = _transfer_parts(p, m)
    msgs = _transfer_forward(B, phi, inter)
    rows, cols = m.lattice_dims
    U = rng.random((n, cols))
    col_states = np.empty((n, cols), dtype=np.int64)
    col_states[:, cols - 1] = _sample_from_logits(msgs[cols - 1], U[:, cols - 1])
    for c in range(cols - 2, -1, -1):
        W = B @ inter[c]
        nxt = col_states[:, c + 1]
        for t in np.unique(nxt):
            mask = nxt == t
            logits = msgs[c] + W @ B[t]
            col_states[mask, c] = _sample_from_logits(logits, U[mask, c])
    X = np.empty((n, m.d), dtype=np.uint8)
    for r in range(rows):
        X[:, r * cols:(r + 1) * cols] = (col_states >> r) & 1
    return X


def ising_to_boltzmann(J, h, m: ModelSpec) -> ParamState:
    """Convert +/-1-state couplings J and fields h to the 0/1 parameterization.

    Substituting s = 2x - 1 gives w = 4J on each edge and b_i = 2h_i minus
    twice the sum of J over edges incident to i; both models then assign
    identical probabilities to corresponding states.
    """
    J = np.asarray(J, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if J.shape != (m.n_edges,) or h.shape != (m.d,):
        raise ValueError("J must align with candidate edges, h with nodes")
    b = 2.0 * h
    np.subtract.at(b, m.edge_i, 2.0 * J)
    np.subtract.at(b, m.edge_j, 2.0 * J)
    return ParamState(biases=b, edge_values=4.0 * J,
                      edge_active=(J != 0.0).astype(np.uint8))


class ExactTable:
    """Enumerated weight table kept in sync with a parameter state.

    Supports cheap single-edge perturbations: for a 0/1 feature f with mean
    mu, adding da to its coupling shifts log Z by log(1 + mu*(e^da - 1)).
    State probabilities are updated multiplicatively and refreshed from the
    log weights every REFRESH_EVERY updates to stop drift.
    """

    REFRESH_EVERY = 64

    def __init__(self, m: ModelSpec):
        _check_enum(m.d)
        cells = (1 << m.d) * (m.d + m.n_edges)
        if cells > (1 << 27):
            raise ValueError("model too large for a dense feature table")
        self.m = m
        self.F = feature_matrix(m)
        self.logw = np.zeros(1 << m.d)
        self.logz = m.d * np.log(2.0)
        self.probs = np.full(1 << m.d, 1.0 / (1 << m.d))
        self._updates = 0

    def theta_full(self, p: ParamState) -> np.ndarray:
        return np.concatenate([p.biases, p.theta_edges()])

    def set_params(self, p: ParamState):
        self.logw = self.F @ self.theta_full(p)
        self._refresh()

    def _refresh(self):
        mx = self.logw.max()
        w = np.exp(self.logw - mx)
        s = w.sum()
        self.logz = float(mx + np.log(s))
        self.probs = w / s
        self._updates = 0

    def trial_logw(self, p: ParamState) -> tuple[np.ndarray, float]:
        """Log weights and log Z for a candidate state, without mutating."""
        logw = self.F @ self.theta_full(p)
        return logw, float(logsumexp(logw))

    def commit_logw(self, logw: np.ndarray, logz: float,
                    probs: np.ndarray | None = None):
        self.logw = logw
        if probs is None:
            mx = logw.max()
            w = np.exp(logw - mx)
            probs = w / w.sum()
        self.probs = probs
        self.logz = logz
        self._updates = 0

    def feature_means(self) -> np.ndarray:
        return self.probs @ self.F

    def moments(self) -> Moments:
        mu = self.feature_means()
        nm, em = mu[:self.m.d], mu[self.m.d:]
        return Moments(nm, nm * (1.0 - nm), em, em * (1.0 - em))

    def edge_mean(self, e: int) -> float:
        return float(self.probs @ self.F[:, self.m.d + e])

    def edge_means_from(self, e: int) -> np.ndarray:
        """Means of candidate edges e onward under the current state."""
        return self.probs @ self.F[:, self.m.d + e:]

    def delta_logz_edge(self, e: int, da: float, mu: float | None = None) -> float:
        """log Z(theta + da on edge e) - log Z(theta)."""
        if mu is None:
            mu = self.edge_mean(e)
        return float(np.log1p(mu * np.expm1(da)))

    def apply_edge_delta(self, e: int, da: float):
        col = self.F[:, self.m.d + e]
        mu = float(self.probs @ col)
        dz = float(np.log1p(mu * np.expm1(da)))
        self.logw = self.logw + da * col
        self.logz += dz
        self.probs = self.probs * np.exp(da * col - dz)
        self._updates += 1
        if self._updates >= self.REFRESH_EVERY:
            self._refresh()
