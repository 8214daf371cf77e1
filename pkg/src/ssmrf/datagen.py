"""Ground-truth model generation, exact data sampling, and dataset file I/O."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from numpy.random import default_rng

from ssmrf.mrf_core import (
    Dataset,
    ModelSpec,
    ParamState,
    enumerate_sample,
    ising_to_boltzmann,
    transfer_matrix_sample,
)

BLOCK_NODES = 12
BLOCK_GROUPS = 3
EDGE_SD = 0.5
BIAS_SD = 0.1
WITHIN_PROB = 0.8
ACROSS_PROB = 0.1


@dataclass(frozen=True)
class GroundTruth:
    spec: ModelSpec
    params: ParamState
    true_edges: np.ndarray
    provenance: str

    def __post_init__(self):
        if self.provenance not in ("block", "lattice", "file"):
            raise ValueError("unknown provenance")
        if not np.array_equal(self.true_edges, self.params.edge_active):
            raise ValueError("true_edges must mirror the active pattern")


def gen_block(seed: int) -> GroundTruth:
    """Three groups of four nodes; within-group pairs couple positively with
    probability 0.8, across-group pairs with probability 0.1.  Couplings are
    drawn on the +/-1 scale and converted to the 0/1 parameterization."""
    rng = default_rng(seed)
    m = ModelSpec.complete(BLOCK_NODES)
    group = np.arange(BLOCK_NODES) // (BLOCK_NODES // BLOCK_GROUPS)
    within = group[m.edge_i] == group[m.edge_j]
    prob = np.where(within, WITHIN_PROB, ACROSS_PROB)
    present = rng.random(m.n_edges) < prob
    J = rng.normal(0.0, EDGE_SD, m.n_edges)
    J[within] = np.abs(J[within])
    J[~present] = 0.0
    h = rng.normal(0.0, BIAS_SD, BLOCK_NODES)
    params = ising_to_boltzmann(J, h, m)
    return GroundTruth(spec=m, params=params,
                       true_edges=params.edge_active.copy(), provenance="block")


def gen_lattice(seed: int, rows: int = 10, cols: int = 10) -> GroundTruth:
    """Grid-adjacent pairs are all true edges; every node pair is a candidate."""
    rng = default_rng(seed)
    m = ModelSpec.lattice(rows, cols)
    grid = np.zeros(m.n_edges, dtype=bool)
    grid[[m.edge_id(i, j) for i, j in m.grid_edges()]] = True
    J = np.where(grid, rng.normal(0.0, EDGE_SD, m.n_edges), 0.0)
    h = rng.normal(0.0, BIAS_SD, m.d)
    params = ising_to_boltzmann(J, h, m)
    return GroundTruth(spec=m, params=params,
                       true_edges=params.edge_active.copy(), provenance="lattice")


def sample_exact_enum(gt: GroundTruth, N: int, seed: int) -> Dataset:
    states = enumerate_sample(gt.params, gt.spec, N, default_rng(seed))
    return Dataset.from_observations(states, gt.spec)


def sample_exact_lattice(gt: GroundTruth, N: int, seed: int) -> Dataset:
    if gt.provenance != "lattice":
        raise ValueError("ground truth is not a lattice instance")
    states = transfer_matrix_sample(gt.params, gt.spec, N, default_rng(seed))
    return Dataset.from_observations(states, gt.spec)


def write_dataset(data: Dataset, path) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        for row in data.observations:
            fh.write(",".join("1" if v else "0" for v in row))
            fh.write("\n")


def read_dataset(path, m: ModelSpec | None = None) -> Dataset:
    """Parse comma-separated 0/1 rows; the candidate set defaults to all pairs."""
    rows = []
    width = None
    with open(path, "r", encoding="ascii", newline="") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if line == "" and width is not None:
                raise ValueError(f"line {ln}: empty row")
            toks = line.split(",")
            if width is None:
                width = len(toks)
            elif len(toks) != width:
                raise ValueError(
                    f"line {ln}: expected {width} columns, found {len(toks)}")
            vals = np.empty(width, dtype=np.uint8)
            for col, tok in enumerate(toks, start=1):
                if tok == "0":
                    vals[col - 1] = 0
                elif tok == "1":
                    vals[col - 1] = 1
                else:
                    raise ValueError(
                        f"line {ln}, column {col}: invalid token {tok!r}")
            rows.append(vals)
    if not rows:
        raise ValueError("dataset file is empty")
    X = np.stack(rows)
    if m is None:
        m = ModelSpec.complete(X.shape[1])
    return Dataset.from_observations(X, m)


def write_ground_truth(gt: GroundTruth, path) -> None:
    doc = {
        "d": gt.spec.d,
        "candidate_edges": [[int(i), int(j)] for i, j in gt.spec.candidate_edges],
        "biases": gt.params.biases.tolist(),
        "edge_values": gt.params.edge_values.tolist(),
        "edge_active": gt.params.edge_active.astype(int).tolist(),
        "lattice_dims": list(gt.spec.lattice_dims) if gt.spec.lattice_dims else None,
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def read_ground_truth(path) -> GroundTruth:
    with open(path, "r", encoding="ascii") as fh:
        doc = json.load(fh)
    dims = doc.get("lattice_dims")
    m = ModelSpec(
        d=int(doc["d"]),
        candidate_edges=tuple((int(i), int(j)) for i, j in doc["candidate_edges"]),
        lattice_dims=tuple(dims) if dims else None,
    )
    params = ParamState(
        biases=np.asarray(doc["biases"], dtype=np.float64),
        edge_values=np.asarray(doc["edge_values"], dtype=np.float64),
        edge_active=np.asarray(doc["edge_active"], dtype=np.uint8),
    )
    if params.biases.shape != (m.d,) or params.edge_values.shape != (m.n_edges,):
        raise ValueError("parameter arrays do not match the candidate set")
    prov = "lattice" if dims else "file"
    return GroundTruth(spec=m, params=params,
                       true_edges=params.edge_active.copy(), provenance=prov)
