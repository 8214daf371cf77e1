"""Experiment driver: generate datasets, fit a method, score the run, and
merge sweep outputs into plot-ready tables.

Every subcommand consumes one JSON config file.  Exit codes: 0 success,
2 config error, 3 numeric failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from .baseline import combine, fit_nodewise
from .datagen import (read_dataset, read_ground_truth, gen_block, gen_lattice,
                      sample_exact_enum, sample_exact_lattice, write_dataset,
                      write_ground_truth)
from .eval import autocorr, cll_bayes, cll_point, f1_at, pr_curve, summarize
from .hyper import HyperPriors
from .mrf_core import MAX_ENUM_NODES
from .sampler import PosteriorSample, RunConfig, run


class CliError(Exception):
    """Failure carrying a dedicated process exit code."""

    code = 1


class ConfigError(CliError):
    code = 2


class NumericError(CliError):
    code = 3


class IoError(CliError):
    code = 4


_POS_NUM = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "type": {"enum": ["block", "lattice", "file"]},
                "seed": {"type": "integer", "minimum": 0},
                "path": {"type": "string"},
                "rows": {"type": "integer", "minimum": 2},
                "cols": {"type": "integer", "minimum": 1},
            },
            "required": ["type"],
        },
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_train": {"type": "integer", "minimum": 0},
                "n_test": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
            },
            "required": ["n_train", "n_test", "seed"],
        },
        "method": {
            "enum": ["bayes", "bayes_exact", "bayes_p0", "wain_max", "wain_min"],
        },
        "sampler": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "iters": {"type": "integer", "minimum": 1},
                "n_chains": {"type": "integer", "minimum": 2},
                "n_gibbs": {"type": "integer", "minimum": 1},
                "step": _POS_NUM,
                "refresh": {"type": "number", "minimum": 0,
                            "exclusiveMaximum": 1},
                "width_scale": _POS_NUM,
                "burn_in": {"type": "integer", "minimum": 0},
                "thin": {"type": "integer", "minimum": 1},
                "keep": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "fixed_p0": {"type": "number", "exclusiveMinimum": 0,
                             "exclusiveMaximum": 1},
                "rj_enabled": {"type": "boolean"},
                "priors": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "a": _POS_NUM, "b": _POS_NUM, "c": _POS_NUM,
                        "d": _POS_NUM, "sigma_b": _POS_NUM,
                    },
                },
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "p0_grid": {
                    "type": "array", "minItems": 1,
                    "items": {"type": "number", "exclusiveMinimum": 0,
                              "exclusiveMaximum": 1},
                },
                "lambda_grid": {
                    "type": "array", "minItems": 1,
                    "items": {"type": "number", "minimum": 0},
                },
            },
            "minProperties": 1,
            "maxProperties": 1,
        },
        "compare": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "runs": {
                    "type": "array", "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            "name": {"type": "string", "minLength": 1},
                            "dir": {"type": "string", "minLength": 1},
                        },
                        "required": ["name", "dir"],
                    },
                },
            },
            "required": ["runs"],
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string", "minLength": 1}},
            "required": ["dir"],
        },
    },
}

# which config seed --seed overrides, per subcommand
_SEED_SLOT = {"gen": ("data", "seed"), "fit": ("sampler", "seed"),
              "eval": ("data", "seed"), "compare": None}


# ------------------------------------------------------------- error staging

def _io(label, fn, *args):
    """Run an input/output step; non-CLI failures become exit-4 errors."""
    try:
        return fn(*args)
    except CliError:
        raise
    except (OSError, ValueError, KeyError) as exc:
        raise IoError(f"{label}: {exc}") from exc


def _compute(fn):
    """Run a numeric step; failures become exit-3 errors."""
    try:
        return fn()
    except CliError:
        raise
    except (RuntimeError, FloatingPointError, ZeroDivisionError,
            ValueError) as exc:
        raise NumericError(str(exc)) from exc


def _need(cfg, key):
    if key not in cfg:
        raise ConfigError(f"config key '{key}' is required for this command")
    return cfg[key]


def _outdir(cfg) -> Path:
    return Path(_need(cfg, "outputs")["dir"])


def _thread_cap() -> int:
    raw = os.environ.get("SSMRF_THREADS", "")
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"SSMRF_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise ConfigError("SSMRF_THREADS must be at least 1")
    return n


# ------------------------------------------------------------------- helpers

def _fmt(x) -> str:
    """Shortest decimal string that round-trips the float exactly."""
    return repr(float(x))


def _write_csv(path, header, rows):
    with open(path, "w", encoding="ascii", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_csv_rows(path, header):
    with open(path, "r", encoding="ascii", newline="") as fh:
        rdr = csv.reader(fh)
        got = next(rdr, None)
        if got != header:
            raise ValueError(f"expected columns {header}, found {got}")
        rows = [row for row in rdr]
    for row in rows:
        if len(row) != len(header):
            raise ValueError("ragged row")
    return rows


def _write_json(path, doc):
    with open(path, "w", encoding="ascii", newline="") as fh:
        json.dump(doc, fh, separators=(",", ":"), allow_nan=False)
        fh.write("\n")


def _read_json(path):
    with open(path, "r", encoding="ascii") as fh:
        return json.load(fh)


def _sample_line(s: PosteriorSample) -> str:
    doc = {
        "iter": int(s.iteration),
        "p0": float(s.p0),
        "sigma0_sq": float(s.sigma0_sq),
        "y": "".join("1" if v else "0" for v in s.y.tolist()),
        "a": [float(v) for v in s.a.tolist()],
        "bias": [float(v) for v in s.biases.tolist()],
    }
    return json.dumps(doc, separators=(",", ":"), allow_nan=False)


def _write_samples(path, samples):
    try:
        lines = [_sample_line(s) for s in samples]
    except ValueError as exc:
        raise NumericError(f"non-finite values in samples: {exc}") from exc
    with open(path, "w", encoding="ascii", newline="") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")


def _read_samples(path) -> list[PosteriorSample]:
    out = []
    with open(path, "r", encoding="ascii") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                y = np.frombuffer(doc["y"].encode("ascii"), np.uint8) - ord("0")
                if y.size and y.max() > 1:
                    raise ValueError("y must be a 0/1 string")
                a = np.asarray(doc["a"], dtype=np.float64)
                if a.shape != (int(y.sum()),):
                    raise ValueError("active-value count does not match y")
                out.append(PosteriorSample(
                    iteration=int(doc["iter"]),
                    y=y.astype(np.uint8),
                    a=a,
                    biases=np.asarray(doc["bias"], dtype=np.float64),
                    p0=float(doc["p0"]),
                    sigma0_sq=float(doc["sigma0_sq"]),
                ))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"samples line {ln}: {exc}") from exc
    if not out:
        raise ValueError("samples file is empty")
    return out


def _nums(arr):
    return [None if math.isnan(v) else float(v) for v in np.asarray(arr).tolist()]


def _write_summary(path, summ):
    doc = {
        "edge_prob": _nums(summ.edge_prob),
        "cond_mean": _nums(summ.cond_mean),
        "cond_std": _nums(summ.cond_std),
        "bias_mean": _nums(summ.bias_mean),
        "density_mean": float(summ.density_mean),
        "density_std": float(summ.density_std),
    }
    _write_json(path, doc)


def _group_rule(m) -> str:
    if m.lattice_dims is not None and min(m.lattice_dims) >= 3:
        return "grid3x3"
    if m.d <= 16:
        return "all"
    raise ConfigError("conditional scoring needs a 3x3-capable grid "
                      "or at most 16 nodes")


def _point_seed(base: int, idx: int) -> int:
    ss = np.random.SeedSequence(entropy=[int(base), int(idx)])
    return int(ss.generate_state(1, np.uint64)[0])


def _run_config(doc, mode, seed=None, fixed_p0=None) -> RunConfig:
    doc = dict(doc)
    if "iters" not in doc:
        raise ConfigError("sampler.iters is required")
    pri = doc.pop("priors", None)
    if seed is not None:
        doc["seed"] = seed
    if fixed_p0 is not None:
        doc["fixed_p0"] = fixed_p0
    try:
        priors = HyperPriors(**pri) if pri else HyperPriors()
        return RunConfig(mode=mode, priors=priors, **doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sampler: {exc}") from exc


def _run_points(point, n):
    cap = min(_thread_cap(), n)
    if cap > 1:
        with ThreadPoolExecutor(max_workers=cap) as pool:
            return list(pool.map(point, range(n)))
    return [point(i) for i in range(n)]


# ------------------------------------------------------------------ commands

def _ground_truth_from(model):
    kind = model["type"]
    if kind == "file":
        for key in ("seed", "rows", "cols"):
            if key in model:
                raise ConfigError(f"model.{key} does not apply to file models")
        if "path" not in model:
            raise ConfigError("file models need model.path")
        return _io("ground truth", read_ground_truth, model["path"])
    if "path" in model:
        raise ConfigError("model.path only applies to file models")
    if "seed" not in model:
        raise ConfigError(f"{kind} models need model.seed")
    if kind == "block":
        for key in ("rows", "cols"):
            if key in model:
                raise ConfigError(f"model.{key} only applies to lattice models")
        return gen_block(int(model["seed"]))
    return gen_lattice(int(model["seed"]), int(model.get("rows", 10)),
                       int(model.get("cols", 10)))


def _sample_from(gt, n, seed_seq):
    if gt.provenance == "lattice":
        return sample_exact_lattice(gt, n, seed_seq)
    if gt.spec.d > MAX_ENUM_NODES:
        raise ConfigError(f"exact sampling needs a lattice or at most "
                          f"{MAX_ENUM_NODES} nodes, got {gt.spec.d}")
    return sample_exact_enum(gt, n, seed_seq)


def cmd_gen(cfg):
    model = _need(cfg, "model")
    data = _need(cfg, "data")
    outdir = _outdir(cfg)
    gt = _ground_truth_from(model)
    tr_ss, te_ss = np.random.SeedSequence(int(data["seed"])).spawn(2)
    train = _compute(lambda: _sample_from(gt, int(data["n_train"]), tr_ss))
    test = _compute(lambda: _sample_from(gt, int(data["n_test"]), te_ss))
    _io("output dir", _ensure_dir, outdir)
    _io("ground truth", write_ground_truth, gt, outdir / "ground_truth.json")
    _io("train data", write_dataset, train, outdir / "train.csv")
    _io("test data", write_dataset, test, outdir / "test.csv")


def cmd_fit(cfg):
    method = _need(cfg, "method")
    data_cfg = _need(cfg, "data")
    outdir = _outdir(cfg)
    gt = _io("ground truth", read_ground_truth, outdir / "ground_truth.json")
    m = gt.spec
    train = _io("train data", read_dataset, outdir / "train.csv", m)

    if method in ("bayes", "bayes_exact"):
        if "sweep" in cfg:
            raise ConfigError("sweep does not apply to single-fit methods")
        mode = "exact" if method == "bayes_exact" else "approximate"
        if mode == "exact" and m.d > MAX_ENUM_NODES:
            raise ConfigError(f"exact mode caps at {MAX_ENUM_NODES} nodes, "
                              f"got {m.d}")
        rc = _run_config(_need(cfg, "sampler"), mode)
        samples = _compute(lambda: list(run(train, m, rc)))
        _io("samples", _write_samples, outdir / "samples.jsonl", samples)
        summ = _compute(lambda: summarize(samples))
        _io("summary", _write_summary, outdir / "summary.json", summ)
        return

    sweep = _need(cfg, "sweep")
    test = _io("test data", read_dataset, outdir / "test.csv", m)
    if test.N == 0:
        raise ConfigError("sweep scoring needs test rows")
    rule = _group_rule(m)
    truth = gt.true_edges.astype(bool)
    cll_seed = int(data_cfg["seed"])

    if method == "bayes_p0":
        grid = sweep.get("p0_grid")
        if grid is None:
            raise ConfigError("bayes_p0 needs sweep.p0_grid")
        sampler_cfg = _need(cfg, "sampler")
        if "fixed_p0" in sampler_cfg:
            raise ConfigError("bayes_p0 sets fixed_p0 from the grid")
        base_seed = int(sampler_cfg.get("seed", 0))

        def point(i):
            rc = _run_config(sampler_cfg, "approximate",
                             seed=_point_seed(base_seed, i),
                             fixed_p0=float(grid[i]))
            samples = list(run(train, m, rc))
            summ = summarize(samples)
            cll = cll_bayes(samples, m, test, rule, cll_seed)
            return (grid[i], summ.density_mean,
                    f1_at(summ.edge_prob, truth), cll)
    else:
        grid = sweep.get("lambda_grid")
        if grid is None:
            raise ConfigError(f"{method} needs sweep.lambda_grid")
        rule_cmb = "max" if method == "wain_max" else "min"

        def point(i):
            fit = fit_nodewise(train, float(grid[i]))
            p = combine(fit, rule_cmb, m)
            scores = p.edge_active.astype(np.float64)
            cll = cll_point(p, m, test, rule, cll_seed)
            return (grid[i], float(scores.mean()), f1_at(scores, truth), cll)

    rows = _compute(lambda: _run_points(point, len(grid)))
    for row in rows:
        if not all(math.isfinite(float(v)) for v in row):
            raise NumericError("non-finite sweep metrics")
    _io("output dir", _ensure_dir, outdir)
    _io("sweep", _write_csv, outdir / "sweep.csv",
        ["grid", "density", "f1", "cll"],
        [[_fmt(v) for v in row] for row in rows])


def cmd_eval(cfg):
    data_cfg = _need(cfg, "data")
    outdir = _outdir(cfg)
    gt = _io("ground truth", read_ground_truth, outdir / "ground_truth.json")
    m = gt.spec
    test = _io("test data", read_dataset, outdir / "test.csv", m)
    summary = _io("summary", _read_json, outdir / "summary.json")
    samples = _io("samples", _read_samples, outdir / "samples.jsonl")

    edge_prob = np.asarray(summary.get("edge_prob", []), dtype=np.float64)
    if edge_prob.shape != (m.n_edges,):
        raise IoError("summary does not match the candidate set")
    for s in samples:
        if s.y.shape != (m.n_edges,) or s.biases.shape != (m.d,):
            raise IoError("samples do not match the candidate set")
    if test.N == 0:
        raise ConfigError("evaluation needs test rows")

    truth = gt.true_edges.astype(bool)
    pred = edge_prob >= 0.5
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)

    rule = _group_rule(m)
    cll = _compute(lambda: cll_bayes(samples, m, test, rule,
                                     int(data_cfg["seed"])))
    if not math.isfinite(cll):
        raise NumericError("non-finite conditional log-likelihood")

    _io("metrics", _write_json, outdir / "metrics.json", {
        "edge_prob": [float(v) for v in edge_prob.tolist()],
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "density_mean": float(summary["density_mean"]),
        "cll": cll,
    })

    curve = _compute(lambda: pr_curve(edge_prob, truth))
    _io("pr curve", _write_csv, outdir / "pr_curve.csv",
        ["score", "precision", "recall"],
        [[_fmt(v) for v in row] for row in curve])

    series = {
        "p0": np.array([s.p0 for s in samples]),
        "sigma0_sq": np.array([s.sigma0_sq for s in samples]),
        "density": np.array([s.y.mean() for s in samples]),
    }
    max_lag = min(50, (len(samples) - 1) // 4)
    ac_rows = []
    if max_lag >= 1:
        cols = {}
        for name, x in series.items():
            try:
                cols[name] = autocorr(x, max_lag)
            except ValueError:
                cols[name] = None
        for lag in range(max_lag + 1):
            ac_rows.append([str(lag)] + [
                "" if cols[n] is None else _fmt(cols[n][lag])
                for n in ("p0", "sigma0_sq", "density")])
    _io("autocorr", _write_csv, outdir / "autocorr.csv",
        ["lag", "p0", "sigma0_sq", "density"], ac_rows)


def _metrics_row(path):
    doc = _read_json(path)
    return ["", _fmt(doc["density_mean"]), _fmt(doc["f1"]), _fmt(doc["cll"])]


def _read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)


def cmd_compare(cfg):
    comp = _need(cfg, "compare")
    outdir = _outdir(cfg)
    runs = comp["runs"]
    names = [r["name"] for r in runs]
    if len(set(names)) != len(names):
        raise ConfigError("compare run names must be unique")

    gt_bytes = None
    rows = []
    for r in runs:
        rundir = Path(r["dir"])
        raw = _io("ground truth", _read_bytes, rundir / "ground_truth.json")
        if gt_bytes is None:
            gt_bytes = raw
        elif raw != gt_bytes:
            raise ConfigError(f"run '{r['name']}' has a different ground truth")
        sweep_path = rundir / "sweep.csv"
        metrics_path = rundir / "metrics.json"
        if sweep_path.exists():
            for rec in _io("sweep", _read_csv_rows, sweep_path,
                           ["grid", "density", "f1", "cll"]):
                rows.append([r["name"], *rec])
        elif metrics_path.exists():
            rows.append([r["name"], *_io("metrics", _metrics_row,
                                         metrics_path)])
        else:
            raise IoError(f"run '{r['name']}' has neither sweep.csv "
                          f"nor metrics.json")

    _io("output dir", _ensure_dir, outdir)
    _io("compare", _write_csv, outdir / "compare.csv",
        ["method", "grid", "density", "f1", "cll"], rows)


_COMMANDS = {"gen": cmd_gen, "fit": cmd_fit, "eval": cmd_eval,
             "compare": cmd_compare}


# ---------------------------------------------------------------- entrypoint

def _load_config(path, cmd, out, seed):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise IoError(f"config: {exc}") from exc
    try:
        cfg = json.loads(text)
    except ValueError as exc:
        raise ConfigError(f"config: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if out is not None:
        dest = cfg.get("outputs")
        if dest is None:
            cfg["outputs"] = {"dir": out}
        elif isinstance(dest, dict):
            dest["dir"] = out
    if seed is not None:
        slot = _SEED_SLOT[cmd]
        if slot is not None:
            sect, key = slot
            node = cfg.get(sect)
            if node is None:
                cfg[sect] = {key: seed}
            elif isinstance(node, dict):
                node[key] = seed
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config: {exc.message}") from exc
    return cfg


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="ssmrf",
        description="structure-learning experiment runner")
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name, text in (("gen", "write ground truth and train/test data"),
                       ("fit", "run the configured method on generated data"),
                       ("eval", "score a fitted run against truth and test data"),
                       ("compare", "merge sweep outputs from several runs")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", default=None, help="override outputs.dir")
        p.add_argument("--seed", type=int, default=None,
                       help="override the command's config seed")
    args = ap.parse_args(argv)
    try:
        cfg = _load_config(args.config, args.cmd, args.out, args.seed)
        _COMMANDS[args.cmd](cfg)
    except CliError as exc:
        print(f"ssmrf {args.cmd}: {exc}", file=sys.stderr)
        return exc.code
    return 0


if __name__ == "__main__":
    sys.exit(main())
