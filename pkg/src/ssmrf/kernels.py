"""Hot-loop kernels: a compiled lane and a pure-numpy fallback.

A missing numba install, or SSMRF_NO_NUMBA=1 in the environment, selects
the numpy lane; BACKEND names the lane in use.  Both lanes scan sites in
identical order and consume identical pre-drawn uniforms, so per-chain
trajectories match across lanes (up to libm rounding of exp).
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - depends on environment
    numba = None

HAS_NUMBA = numba is not None
USE_NUMBA = HAS_NUMBA and not os.environ.get("SSMRF_NO_NUMBA")
BACKEND = "numba" if USE_NUMBA else "numpy"


def gibbs_sweeps_numpy(states, indptr, nbr, wts, biases, u, u0, sweeps):
    """Systematic-scan Gibbs over all chains, vectorized across chains.

    states: (n, d) uint8, updated in place.  u holds pre-drawn uniforms of
    shape (n, B, d); sweep s of this call consumes u[:, u0 + s, :].
    """
    n, d = states.shape
    for s in range(u0, u0 + sweeps):
        for i in range(d):
            lo, hi = indptr[i], indptr[i + 1]
            acc = biases[i] + states[:, nbr[lo:hi]] @ wts[lo:hi]
            pr = 1.0 / (1.0 + np.exp(-acc))
            states[:, i] = u[:, s, i] < pr


if HAS_NUMBA:
    @numba.njit(cache=True)
    def _gibbs_sweeps_jit(states, indptr, nbr, wts, biases, u, u0, sweeps):
        n, d = states.shape
        for c in range(n):
            for s in range(u0, u0 + sweeps):
                for i in range(d):
                    acc = biases[i]
                    for k in range(indptr[i], indptr[i + 1]):
                        acc += wts[k] * states[c, nbr[k]]
                    pr = 1.0 / (1.0 + np.exp(-acc))
                    states[c, i] = np.uint8(1) if u[c, s, i] < pr else np.uint8(0)

    def gibbs_sweeps_numba(states, indptr, nbr, wts, biases, u, u0, sweeps):
        _gibbs_sweeps_jit(states, indptr, nbr, wts, biases, u,
                          np.int64(u0), np.int64(sweeps))
else:  # pragma: no cover - depends on environment
    gibbs_sweeps_numba = None

gibbs_sweeps = gibbs_sweeps_numba if USE_NUMBA else gibbs_sweeps_numpy
