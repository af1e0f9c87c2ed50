"""Experiment orchestration: strict config parsing, seeded parallel trial
execution, flat-row persistence and quantile summaries.

Determinism contract: a config plus base seed fixes every data row byte
for byte.  Trials are split into fixed-size batches independent of the
worker count, each trial draws from its own counter-based stream seeded
by base_seed XOR trial, and rows are written in trial order, so reruns
and different worker counts produce identical files.  Wall-clock time
lives only in the summary, never in data rows.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import gslln as gslln_mod
from . import noise as noise_mod
from . import problems as problems_mod
from .conditions import check_sa_conditions, check_sgd_conditions
from .noise import NoiseModel
from .schedules import (
    IncrementKind,
    IncrementSchedule,
    Multiplier,
    MultiplierKind,
    Schedule,
    ScheduleKind,
)
from .sa_engine import sa_run_batch
from .sgd_engine import MaskKind, MaskPolicy, sgd_run_batch

BATCH_TRIALS = 16  # fixed batch size, independent of worker count

MODES = ("sa", "sgd", "gslln", "conditions", "sweep")


class ConfigError(ValueError):
    """Invalid experiment config; the message names the offending field."""


# ---------------------------------------------------------------------------
# strict validation helpers


def _fail(path, msg):
    raise ConfigError(f"{path}: {msg}")


def _expect_keys(obj, path, required, optional=()):
    if not isinstance(obj, dict):
        _fail(path, "must be an object")
    for k in obj:
        if k not in required and k not in optional:
            _fail(f"{path}.{k}" if path else k, "unknown key")
    for k in required:
        if k not in obj:
            _fail(f"{path}.{k}" if path else k, "missing")


def _num(obj, path, key, lo=None, hi=None, lo_open=False, hi_open=False, default=None, integer=False):
    if key not in obj:
        if default is None:
            _fail(f"{path}.{key}", "missing")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(f"{path}.{key}", "must be a number")
    if integer and int(v) != v:
        _fail(f"{path}.{key}", "must be an integer")
    if lo is not None and (v <= lo if lo_open else v < lo):
        _fail(f"{path}.{key}", f"must be {'>' if lo_open else '>='} {lo}")
    if hi is not None and (v >= hi if hi_open else v > hi):
        _fail(f"{path}.{key}", f"must be {'<' if hi_open else '<='} {hi}")
    return int(v) if integer else float(v)


def _vec(obj, path, key, dim, default=None):
    v = obj.get(key, default)
    if v is None:
        _fail(f"{path}.{key}", "missing")
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return [float(v)] * dim
    if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        _fail(f"{path}.{key}", "must be a number or list of numbers")
    if len(v) != dim:
        _fail(f"{path}.{key}", f"length must equal dim = {dim}")
    return [float(x) for x in v]


# ---------------------------------------------------------------------------
# block builders (validate + normalize + construct)


def _norm_noise(block, path="noise"):
    _expect_keys(block, path, ["family", "dim"], ["sigma", "nu", "p", "mu0"])
    fam = block["family"]
    if fam not in [f.value for f in noise_mod.Family]:
        _fail(f"{path}.family", f"unknown family {fam!r}")
    dim = _num(block, path, "dim", lo=1, integer=True)
    out = {"family": fam, "dim": dim, "sigma": _num(block, path, "sigma", lo=0, default=1.0)}
    if fam in ("student_t", "scaled_martingale"):
        out["nu"] = _num(block, path, "nu", lo=1, lo_open=True)
    if fam == "log_tempered_cauchy":
        out["p"] = _num(block, path, "p", lo=1, lo_open=True)
    if fam == "drifting_mean":
        out["mu0"] = _num(block, path, "mu0")
    return out


def build_noise(norm) -> NoiseModel:
    kw = {k: v for k, v in norm.items() if k not in ("family", "dim")}
    return NoiseModel(noise_mod.Family(norm["family"]), norm["dim"], **kw)


def _norm_schedule(block, path="schedule"):
    _expect_keys(block, path, ["kind"], ["D", "gamma", "delta"])
    kind = block["kind"]
    if kind not in [k.value for k in ScheduleKind]:
        _fail(f"{path}.kind", f"unknown kind {kind!r}")
    out = {"kind": kind, "D": _num(block, path, "D", lo=0, lo_open=True, default=1.0)}
    if kind == "power":
        out["gamma"] = _num(block, path, "gamma", lo=0, hi=1, lo_open=True)
    if kind == "log_tempered":
        out["delta"] = _num(block, path, "delta", lo=0, hi=1, lo_open=True)
    return out


def build_schedule(norm) -> Schedule:
    return Schedule(
        ScheduleKind(norm["kind"]), D=norm["D"], gamma=norm.get("gamma"), delta=norm.get("delta")
    )


def _norm_increment(block, path="increment"):
    _expect_keys(block, path, ["kind"], ["kappa", "gamma", "value"])
    kind = block["kind"]
    if kind not in [k.value for k in IncrementKind]:
        _fail(f"{path}.kind", f"unknown kind {kind!r}")
    out = {"kind": kind}
    if kind == "log_power":
        out["kappa"] = _num(block, path, "kappa", lo=0, hi=1, lo_open=True, default=1.0)
    if kind == "power":
        out["gamma"] = _num(block, path, "gamma", lo=0, hi=1, lo_open=True)
    if kind == "constant":
        out["value"] = _num(block, path, "value", lo=0, lo_open=True)
    return out


def build_increment(norm) -> IncrementSchedule:
    return IncrementSchedule(
        IncrementKind(norm["kind"]),
        kappa=norm.get("kappa"),
        gamma=norm.get("gamma"),
        value0=norm.get("value", 1.0),
    )


def _norm_multiplier(block, path="multiplier"):
    _expect_keys(block, path, ["kind"], ["C1", "value", "norm"])
    kind = block["kind"]
    if kind not in ("constant", "norm_tracking", "signed"):
        _fail(f"{path}.kind", f"unknown kind {kind!r}")
    out = {"kind": kind, "C1": _num(block, path, "C1", lo=0, lo_open=True, default=1.0)}
    if kind == "constant":
        out["value"] = _num(block, path, "value", default=out["C1"])
        if abs(out["value"]) > out["C1"]:
            _fail(f"{path}.value", "must satisfy |value| <= C1")
    nrm = block.get("norm", "l2")
    if nrm not in ("l2", "linf", "l1"):
        _fail(f"{path}.norm", f"unknown norm {nrm!r}")
    out["norm"] = nrm
    return out


def build_multiplier(norm) -> Multiplier:
    return Multiplier(
        MultiplierKind(norm["kind"]),
        C1=norm["C1"],
        value=norm.get("value"),
        norm=norm["norm"],
    )


def _norm_problem(block, mode, path="problem"):
    _expect_keys(
        block, path, ["kind"],
        ["dim", "rho0", "target", "rotation", "norm", "seed", "diag", "p", "q", "eps", "box", "c_max"],
    )
    kind = block["kind"]
    if kind == "contraction":
        if mode == "sgd":
            _fail(f"{path}.kind", "contraction problems are for sa mode")
        dim = _num(block, path, "dim", lo=1, integer=True)
        out = {
            "kind": kind,
            "dim": dim,
            "rho0": _num(block, path, "rho0", lo=0, hi=1, hi_open=True),
            "target": _vec(block, path, "target", dim, default=0.0),
            "rotation": block.get("rotation", "identity"),
            "seed": _num(block, path, "seed", default=0, integer=True),
            "norm": block.get("norm", "l2"),
        }
        if out["rotation"] not in ("identity", "random"):
            _fail(f"{path}.rotation", "must be 'identity' or 'random'")
        if out["norm"] not in ("l2", "linf", "l1"):
            _fail(f"{path}.norm", f"unknown norm {out['norm']!r}")
        return out
    if kind == "quadratic":
        if "diag" not in block:
            _fail(f"{path}.diag", "missing (diagonal quadratics only here)")
        diag = block["diag"]
        if not isinstance(diag, list) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) and x > 0 for x in diag
        ):
            _fail(f"{path}.diag", "must be a list of positive numbers")
        dim = len(diag)
        return {
            "kind": kind,
            "diag": [float(x) for x in diag],
            "p": _vec(block, path, "p", dim, default=0.0),
        }
    if kind == "quartic":
        if mode == "sa":
            _fail(f"{path}.kind", "quartic problems are for sgd mode")
        diag = block.get("diag")
        if not isinstance(diag, list) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) and x > 0 for x in diag
        ):
            _fail(f"{path}.diag", "must be a list of positive numbers")
        return {
            "kind": kind,
            "diag": [float(x) for x in diag],
            "eps": _num(block, path, "eps", lo=0),
            "box": _num(block, path, "box", lo=0, lo_open=True),
            "c_max": _num(block, path, "c_max", lo=0, lo_open=True),
        }
    _fail(f"{path}.kind", f"unknown kind {kind!r}")


def build_problem(norm, mode):
    kind = norm["kind"]
    if kind == "contraction":
        return problems_mod.builtin_contraction(
            norm["dim"],
            norm["rho0"],
            target=np.asarray(norm["target"]),
            rotation=norm["rotation"],
            seed=norm["seed"],
            norm=norm["norm"],
        )
    if kind == "quadratic":
        diag = np.asarray(norm["diag"])
        p = np.asarray(norm["p"])
        if mode == "sgd":
            return problems_mod.builtin_diagonal_quadratic_sgd(diag, p)
        return problems_mod.builtin_quadratic(np.diag(diag), p)
    return problems_mod.builtin_quartic_sgd(
        np.asarray(norm["diag"]), norm["eps"], norm["box"], norm["c_max"]
    )


def _norm_mask(block, dim, path="mask"):
    _expect_keys(block, path, ["kind"], ["bsz"])
    kind = block["kind"]
    if kind not in (MaskKind.ALL_ONES, MaskKind.ROUND_ROBIN, MaskKind.NOISE_DRIVEN):
        _fail(f"{path}.kind", f"unknown kind {kind!r}")
    out = {"kind": kind}
    if kind == MaskKind.ROUND_ROBIN:
        out["bsz"] = _num(block, path, "bsz", lo=1, default=1, integer=True)
    return out


def build_mask(norm, dim) -> MaskPolicy:
    return MaskPolicy(kind=norm["kind"], dim=dim, bsz=norm.get("bsz", 1))


def _norm_assert(block, path="assert"):
    _expect_keys(block, path, [], ["max_divergence", "median_final_max", "decay"])
    out = {}
    if "max_divergence" in block:
        out["max_divergence"] = _num(block, path, "max_divergence", lo=0, integer=True)
    if "median_final_max" in block:
        out["median_final_max"] = _num(block, path, "median_final_max", lo=0, lo_open=True)
    if "decay" in block:
        d = block["decay"]
        _expect_keys(d, f"{path}.decay", ["from", "to", "factor"])
        out["decay"] = {
            "from": _num(d, f"{path}.decay", "from", lo=0, integer=True),
            "to": _num(d, f"{path}.decay", "to", lo=0, integer=True),
            "factor": _num(d, f"{path}.decay", "factor", lo=0, lo_open=True),
        }
    return out


# ---------------------------------------------------------------------------
# whole-config parsing


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, normalized experiment description."""

    mode: str
    normalized: dict
    experiment_id: str
    config_hash: str


_COMMON = ["mode"]
_COMMON_OPT = ["experiment_id", "format", "assert"]


def parse_config(text_or_dict) -> ExperimentConfig:
    """Validate a JSON config; raises ConfigError naming the first bad field."""
    if isinstance(text_or_dict, (str, bytes)):
        try:
            raw = json.loads(text_or_dict)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config: invalid JSON ({e})") from None
    else:
        raw = text_or_dict
    if not isinstance(raw, dict):
        raise ConfigError("config: must be a JSON object")
    mode = raw.get("mode")
    if mode not in MODES:
        _fail("mode", f"must be one of {MODES}")

    norm = {"mode": mode}
    if mode == "sa":
        _expect_keys(
            raw, "", _COMMON + ["trials", "base_seed", "horizon", "checkpoints", "problem", "noise", "schedule"],
            _COMMON_OPT + ["multiplier", "x0"],
        )
        norm.update(_norm_runs_common(raw))
        norm["problem"] = _norm_problem(raw["problem"], "sa")
        norm["noise"] = _norm_noise(raw["noise"])
        norm["schedule"] = _norm_schedule(raw["schedule"])
        norm["multiplier"] = _norm_multiplier(raw.get("multiplier", {"kind": "constant", "C1": 1.0}))
        dim = norm["problem"].get("dim") or len(norm["problem"]["diag"])
        norm["x0"] = _vec(raw, "", "x0", dim, default=1.0)
        _check_dims(norm, dim)
    elif mode == "sgd":
        _expect_keys(
            raw, "",
            _COMMON + ["trials", "base_seed", "horizon", "checkpoints", "problem", "noise", "schedule", "increment"],
            _COMMON_OPT + ["multiplier", "mask", "y0"],
        )
        norm.update(_norm_runs_common(raw))
        norm["problem"] = _norm_problem(raw["problem"], "sgd")
        norm["noise"] = _norm_noise(raw["noise"])
        norm["schedule"] = _norm_schedule(raw["schedule"])
        norm["increment"] = _norm_increment(raw["increment"])
        mult = raw.get("multiplier", {"kind": "constant", "C1": 1.0})
        if "norm" not in mult:
            mult = dict(mult, norm="linf")
        norm["multiplier"] = _norm_multiplier(mult)
        dim = len(norm["problem"]["diag"])
        norm["mask"] = _norm_mask(raw.get("mask", {"kind": "all_ones"}), dim)
        norm["y0"] = _vec(raw, "", "y0", dim, default=0.0)
        _check_dims(norm, dim)
    elif mode == "gslln":
        _expect_keys(
            raw, "", _COMMON + ["trials", "base_seed", "horizon", "checkpoints", "noise", "schedule"],
            _COMMON_OPT + ["t_grid", "zeta_policies", "threshold"],
        )
        norm.update(_norm_runs_common(raw))
        norm["noise"] = _norm_noise(raw["noise"])
        norm["schedule"] = _norm_schedule(raw["schedule"])
        tg = raw.get("t_grid", [0.5, 1.0, 2.0, 5.0])
        if not isinstance(tg, list) or not all(
            isinstance(t, (int, float)) and not isinstance(t, bool) and t > 0 for t in tg
        ):
            _fail("t_grid", "must be a list of positive numbers")
        norm["t_grid"] = [float(t) for t in tg]
        zps = raw.get("zeta_policies", [{"kind": "constant", "bound": 1.0}])
        if not isinstance(zps, list) or not zps:
            _fail("zeta_policies", "must be a nonempty list")
        out_zps = []
        for i, z in enumerate(zps):
            _expect_keys(z, f"zeta_policies[{i}]", ["kind"], ["bound"])
            if z["kind"] not in ("constant", "signed", "noise_sign"):
                _fail(f"zeta_policies[{i}].kind", f"unknown kind {z['kind']!r}")
            out_zps.append(
                {"kind": z["kind"], "bound": _num(z, f"zeta_policies[{i}]", "bound", lo=0, lo_open=True, default=1.0)}
            )
        norm["zeta_policies"] = out_zps
        norm["threshold"] = _num(raw, "", "threshold", lo=0, lo_open=True, default=0.02)
    elif mode == "conditions":
        _expect_keys(raw, "", _COMMON + ["noise", "schedule"], _COMMON_OPT + ["increment", "horizon"])
        norm["noise"] = _norm_noise(raw["noise"])
        norm["schedule"] = _norm_schedule(raw["schedule"])
        if "increment" in raw:
            norm["increment"] = _norm_increment(raw["increment"])
        norm["horizon"] = _num(raw, "", "horizon", lo=1000, default=10_000, integer=True)
    else:  # sweep
        _expect_keys(raw, "", _COMMON + ["sweep", "base"], _COMMON_OPT)
        sw = raw["sweep"]
        _expect_keys(sw, "sweep", ["path", "values"])
        if not isinstance(sw["path"], str) or not sw["path"]:
            _fail("sweep.path", "must be a dotted key path")
        if not isinstance(sw["values"], list) or not sw["values"]:
            _fail("sweep.values", "must be a nonempty list")
        base = raw["base"]
        if not isinstance(base, dict) or base.get("mode") in (None, "sweep"):
            _fail("base", "must be a full non-sweep config")
        children = []
        for v in sw["values"]:
            child = json.loads(json.dumps(base))
            _set_path(child, sw["path"], v)
            children.append(parse_config(child).normalized)
        norm["sweep"] = {"path": sw["path"], "values": sw["values"]}
        norm["children"] = children

    if "format" in raw:
        if raw["format"] not in ("csv", "jsonl"):
            _fail("format", "must be 'csv' or 'jsonl'")
        norm["format"] = raw["format"]
    if "assert" in raw:
        norm["assert"] = _norm_assert(raw["assert"])

    blob = json.dumps(norm, sort_keys=True, separators=(",", ":"))
    h = hashlib.sha256(blob.encode()).hexdigest()[:16]
    exp_id = raw.get("experiment_id")
    if exp_id is not None and (not isinstance(exp_id, str) or not exp_id):
        _fail("experiment_id", "must be a nonempty string")
    return ExperimentConfig(
        mode=mode, normalized=norm, experiment_id=exp_id or f"{mode}-{h[:8]}", config_hash=h
    )


def _norm_runs_common(raw):
    out = {
        "trials": _num(raw, "", "trials", lo=1, integer=True),
        "base_seed": _num(raw, "", "base_seed", lo=0, integer=True),
        "horizon": _num(raw, "", "horizon", lo=1, integer=True),
    }
    cps = raw["checkpoints"]
    if (
        not isinstance(cps, list)
        or not cps
        or not all(isinstance(c, int) and not isinstance(c, bool) for c in cps)
    ):
        _fail("checkpoints", "must be a nonempty list of integers")
    if sorted(cps) != cps or len(set(cps)) != len(cps):
        _fail("checkpoints", "must be strictly increasing")
    if cps[0] < 0 or cps[-1] > out["horizon"]:
        _fail("checkpoints", "must lie within [0, horizon]")
    out["checkpoints"] = cps
    return out


def _check_dims(norm, dim):
    if norm["noise"]["dim"] != dim:
        _fail("noise.dim", f"must equal the problem dimension {dim}")


def _set_path(obj, path, value):
    keys = path.split(".")
    cur = obj
    for k in keys[:-1]:
        if k not in cur or not isinstance(cur[k], dict):
            cur[k] = {}
        cur = cur[k]
    cur[keys[-1]] = value


# ---------------------------------------------------------------------------
# row schemas and persistence


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return ""
        return repr(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_rows(rows, columns, path, fmt="csv"):
    """Atomic write of flat rows; bytes depend only on the row content."""
    tmp = path + ".tmp"
    try:
        with open(tmp, "w", newline="") as fh:
            if fmt == "csv":
                fh.write(",".join(columns) + "\n")
                for r in rows:
                    fh.write(",".join(_fmt(r.get(c)) for c in columns) + "\n")
            else:
                for r in rows:
                    fh.write(
                        json.dumps({c: (None if _fmt(r.get(c)) == "" else r.get(c)) for c in columns},
                                   sort_keys=True)
                        + "\n"
                    )
        os.replace(tmp, path)
    except OSError:
        marker = path + ".partial"
        with open(marker, "w") as fh:
            fh.write("incomplete output\n")
        raise


def _parse_cell(v):
    if v == "":
        return None
    if v in ("true", "false"):
        return v == "true"
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def read_rows(path):
    rows = []
    if path.endswith(".jsonl"):
        with open(path) as fh:
            for line in fh:
                rows.append(json.loads(line))
        return rows
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            vals = line.rstrip("\n").split(",")
            rows.append({k: _parse_cell(v) for k, v in zip(header, vals)})
    return rows


@dataclass
class SummaryRecord:
    experiment_id: str
    config_hash: str
    checkpoints: list
    quantiles: dict  # checkpoint -> {"q10": .., "q50": .., "q90": ..}
    divergence_count: int
    trials: int
    wall_time: float

    def to_dict(self):
        return {
            "experiment_id": self.experiment_id,
            "config_hash": self.config_hash,
            "checkpoints": self.checkpoints,
            "quantiles": {str(k): v for k, v in self.quantiles.items()},
            "divergence_count": self.divergence_count,
            "trials": self.trials,
            "wall_time": self.wall_time,
        }


def summarize(rows, experiment_id="", config_hash="", wall_time=0.0) -> SummaryRecord:
    """Exact order-statistic quantiles (lower interpolation) per checkpoint.

    Divergence-flagged trials are excluded from the error quantiles and
    counted separately; this keeps heavy-tailed negative controls from
    poisoning the comparisons.
    """
    if not rows:
        raise ValueError("no rows to summarize")
    err_key = "abs_s" if "abs_s" in rows[0] else "err"
    by_cp = {}
    trials = set()
    diverged_trials = set()
    for r in rows:
        trials.add(r["trial"])
        if r.get("diverged"):
            diverged_trials.add(r["trial"])
        if r.get(err_key) is None:
            continue
        by_cp.setdefault(r["checkpoint_n"], []).append(float(r[err_key]))
    quantiles = {}
    for cp in sorted(by_cp):
        vals = np.asarray(by_cp[cp])
        quantiles[cp] = {
            "q10": float(np.quantile(vals, 0.10, method="lower")),
            "q50": float(np.quantile(vals, 0.50, method="lower")),
            "q90": float(np.quantile(vals, 0.90, method="lower")),
            "n": int(vals.size),
        }
    return SummaryRecord(
        experiment_id=experiment_id,
        config_hash=config_hash,
        checkpoints=sorted(by_cp),
        quantiles=quantiles,
        divergence_count=len(diverged_trials),
        trials=len(trials),
        wall_time=wall_time,
    )


# ---------------------------------------------------------------------------
# batch tasks (top level so they can cross process boundaries)


def _sa_batch_task(norm, trial_indices):
    prob = build_problem(norm["problem"], "sa")
    res = sa_run_batch(
        problem=prob,
        schedule=build_schedule(norm["schedule"]),
        multiplier=build_multiplier(norm["multiplier"]),
        model=build_noise(norm["noise"]),
        x0=np.asarray(norm["x0"]),
        horizon=norm["horizon"],
        checkpoints=norm["checkpoints"],
        base_seed=norm["base_seed"],
        trials=trial_indices,
    )
    return res


def _sgd_batch_task(norm, trial_indices):
    prob = build_problem(norm["problem"], "sgd")
    res = sgd_run_batch(
        problem=prob,
        eta=build_schedule(norm["schedule"]),
        c=build_increment(norm["increment"]),
        mask=build_mask(norm["mask"], prob.dim),
        multiplier=build_multiplier(norm["multiplier"]),
        model=build_noise(norm["noise"]),
        y0=np.asarray(norm["y0"]),
        horizon=norm["horizon"],
        checkpoints=norm["checkpoints"],
        base_seed=norm["base_seed"],
        trials=trial_indices,
    )
    return res


def _gslln_cell_task(norm, t, zeta):
    return gslln_mod.run_cell(
        noise=build_noise(norm["noise"]),
        rate=build_schedule(norm["schedule"]),
        t=t,
        zeta=gslln_mod.ZetaPolicy(kind=zeta["kind"], bound=zeta["bound"]),
        trials=norm["trials"],
        horizon=norm["horizon"],
        checkpoints=norm["checkpoints"],
        base_seed=norm["base_seed"],
    )


def _batches(trials):
    return [list(range(i, min(i + BATCH_TRIALS, trials))) for i in range(0, trials, BATCH_TRIALS)]


def _run_tasks(tasks, workers):
    """Run callables preserving order; processes only when workers > 1."""
    if workers <= 1:
        return [t() for t in tasks]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as ex:
        futs = [ex.submit(t.fn, *t.args) for t in tasks]
        return [f.result() for f in futs]


@dataclass
class _Task:
    fn: object
    args: tuple

    def __call__(self):
        return self.fn(*self.args)


# ---------------------------------------------------------------------------
# experiment runner


def run_experiment(cfg: ExperimentConfig, out_dir: str, workers: int = 1, fmt: Optional[str] = None):
    """Execute a parsed config, persist rows + summary, return the summary.

    Output layout: <out_dir>/<experiment_id>/rows.csv (or .jsonl) plus
    summary.json; sweep mode writes one child directory per value and a
    joint index.json.
    """
    fmt = fmt or cfg.normalized.get("format", "csv")
    t0 = time.perf_counter()
    exp_dir = os.path.join(out_dir, cfg.experiment_id)
    os.makedirs(exp_dir, exist_ok=True)
    norm = cfg.normalized

    if cfg.mode == "sweep":
        index = {"experiment_id": cfg.experiment_id, "path": norm["sweep"]["path"], "children": []}
        summaries = []
        for i, (value, child_norm) in enumerate(zip(norm["sweep"]["values"], norm["children"])):
            child_id = f"{cfg.experiment_id}-{i}"
            blob = json.dumps(child_norm, sort_keys=True, separators=(",", ":"))
            child_cfg = ExperimentConfig(
                mode=child_norm["mode"],
                normalized=child_norm,
                experiment_id=child_id,
                config_hash=hashlib.sha256(blob.encode()).hexdigest()[:16],
            )
            s = run_experiment(child_cfg, exp_dir, workers=workers, fmt=fmt)
            summaries.append(s)
            index["children"].append(
                {"experiment_id": child_id, "value": value, "dir": child_id}
            )
        with open(os.path.join(exp_dir, "index.json"), "w") as fh:
            json.dump(index, fh, indent=2, sort_keys=True)
        return summaries

    if cfg.mode == "conditions":
        model = build_noise(norm["noise"])
        sched = build_schedule(norm["schedule"])
        if "increment" in norm:
            reports = check_sgd_conditions(model, sched, build_increment(norm["increment"]))
        else:
            reports = check_sa_conditions(model, sched)
        rows = []
        for rep in reports:
            for row in rep.rows():
                rows.append(dict(row, experiment_id=cfg.experiment_id, mode=rep.mode))
        cols = ["experiment_id", "mode", "family", "verdict", "clause", "ok", "value", "basis"]
        write_rows(rows, cols, os.path.join(exp_dir, f"rows.{fmt}"), fmt)
        summary = {
            "experiment_id": cfg.experiment_id,
            "config_hash": cfg.config_hash,
            "verdicts": {r.family: r.verdict for r in reports},
            "wall_time": time.perf_counter() - t0,
        }
        with open(os.path.join(exp_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        return summary

    if cfg.mode == "gslln":
        cells = [(t, z) for t in norm["t_grid"] for z in norm["zeta_policies"]]
        tasks = [_Task(_gslln_cell_task, (norm, t, z)) for t, z in cells]
        results = _run_tasks(tasks, workers)
        rows = []
        for (t, z), res in zip(cells, results):
            cell_id = f"t{t:g}-{z['kind']}"
            for trial in range(norm["trials"]):
                seed = noise_mod.trial_seed(norm["base_seed"], trial)
                for k, cp in enumerate(res["checkpoints"]):
                    rows.append(
                        {
                            "experiment_id": cfg.experiment_id,
                            "cell_id": cell_id,
                            "t": float(t),
                            "zeta_policy": z["kind"],
                            "trial": trial,
                            "seed": seed,
                            "checkpoint_n": int(cp),
                            "abs_s": float(res["abs_s"][trial, k]),
                        }
                    )
        cols = ["experiment_id", "cell_id", "t", "zeta_policy", "trial", "seed", "checkpoint_n", "abs_s"]
        write_rows(rows, cols, os.path.join(exp_dir, f"rows.{fmt}"), fmt)
        summary = summarize(rows, cfg.experiment_id, cfg.config_hash, time.perf_counter() - t0)
        with open(os.path.join(exp_dir, "summary.json"), "w") as fh:
            json.dump(summary.to_dict(), fh, indent=2, sort_keys=True)
        return summary

    # sa / sgd trial batches
    task_fn = _sa_batch_task if cfg.mode == "sa" else _sgd_batch_task
    tasks = [_Task(task_fn, (norm, b)) for b in _batches(norm["trials"])]
    results = _run_tasks(tasks, workers)
    rows = []
    for batch, res in zip(_batches(norm["trials"]), results):
        for bi, trial in enumerate(batch):
            div = bool(res.diverged[bi])
            for k, cp in enumerate(res.checkpoints):
                err = res.err[bi, k]
                row = {
                    "experiment_id": cfg.experiment_id,
                    "trial": trial,
                    "seed": int(res.seeds[bi]),
                    "checkpoint_n": int(cp),
                    "err": None if np.isnan(err) else float(err),
                    "phi_n": None if np.isnan(res.phi[bi, k]) else float(res.phi[bi, k]),
                    "diverged": div,
                }
                if cfg.mode == "sa":
                    row["beta_n"] = float(res.extra_cols["beta_n"][k])
                else:
                    row["eta_n"] = float(res.extra_cols["eta_n"][k])
                    row["c_n"] = float(res.extra_cols["c_n"][k])
                    row["active_count"] = int(res.extra_cols["active_count"][bi, k])
                rows.append(row)
    cols = ["experiment_id", "trial", "seed", "checkpoint_n", "err", "phi_n", "diverged"]
    cols += ["beta_n"] if cfg.mode == "sa" else ["eta_n", "c_n", "active_count"]
    write_rows(rows, cols, os.path.join(exp_dir, f"rows.{fmt}"), fmt)
    summary = summarize(rows, cfg.experiment_id, cfg.config_hash, time.perf_counter() - t0)
    with open(os.path.join(exp_dir, "summary.json"), "w") as fh:
        json.dump(summary.to_dict(), fh, indent=2, sort_keys=True)
    return summary


def check_assertions(summary: SummaryRecord, spec: dict):
    """Evaluate an optional assert block; returns (ok, messages)."""
    msgs = []
    ok = True
    if "max_divergence" in spec:
        if summary.divergence_count > spec["max_divergence"]:
            ok = False
            msgs.append(
                f"divergence count {summary.divergence_count} > {spec['max_divergence']}"
            )
    if "median_final_max" in spec:
        cp = summary.checkpoints[-1]
        med = summary.quantiles[cp]["q50"]
        if not med <= spec["median_final_max"]:
            ok = False
            msgs.append(f"median err at n={cp} is {med:.6g} > {spec['median_final_max']}")
    if "decay" in spec:
        d = spec["decay"]
        m_from = summary.quantiles.get(d["from"], {}).get("q50")
        m_to = summary.quantiles.get(d["to"], {}).get("q50")
        if m_from is None or m_to is None:
            ok = False
            msgs.append("decay checkpoints not recorded")
        elif not m_to * d["factor"] <= m_from:
            ok = False
            msgs.append(
                f"median decay {m_from:.6g} -> {m_to:.6g} misses factor {d['factor']}"
            )
    return ok, msgs
