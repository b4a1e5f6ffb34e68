"""Experiment configuration, dispatch, CSV output and the verify suite."""
from __future__ import annotations

import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np

from . import analytics, brw, snake, spine
from .distributions import jump_from_config, make_geometric_critical, make_jump_srw, offspring_from_config
from .errors import ConfigError, TreeRangeError, ValidationError
from .estimates import EstimateRecord
from .rng import resolve_seed

HEADER = ["experiment", "dim", "n", "p", "reps", "seed", "value", "stderr", "extra_json", "elapsed_ms"]
BRW_HEADER = ["replica", "p", "dim", "R", "N", "generations", "truncated"]

EXPERIMENTS = (
    "infinite-range", "no-return", "constant-formula", "conditioned-range", "snake-free", "snake-excursion",
    "head-return-exact", "no-return-head", "green", "green-sum", "suffcond", "bessel", "brw", "verify",
)


@dataclass
class ExperimentConfig:
    experiment: str
    dim: int = 4
    n: int | None = None
    p: int | None = None
    horizon: int | None = None
    j_max: int | None = None
    reps: int = 1
    seed: int = 0
    workers: int = 1
    out: str | None = None
    offspring: dict = field(default_factory=lambda: {"kind": "geometric"})
    jump: dict | None = None
    options: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if "experiment" not in raw:
            raise ConfigError("config needs an 'experiment' key")
        if raw["experiment"] not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {raw['experiment']!r}")
        for key in ("offspring", "options"):
            if key in raw and not isinstance(raw[key], dict):
                raise ConfigError(f"'{key}' must be an object")
        if raw.get("jump") is not None and not isinstance(raw["jump"], dict):
            raise ConfigError("'jump' must be an object")
        return cls(**raw)

    def theta(self):
        return jump_from_config(self.jump) if self.jump else make_jump_srw(self.dim)

    def mu(self):
        return offspring_from_config(self.offspring)


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad JSON in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return ExperimentConfig.from_dict(raw)


def _need(cfg: ExperimentConfig, name: str, lo: int = 1):
    v = getattr(cfg, name)
    if v is None:
        raise ValidationError(f"{cfg.experiment} needs --{name.replace('_', '-')}")
    if v < lo:
        raise ValidationError(f"{name} must be >= {lo}")
    return v


def validate(cfg: ExperimentConfig) -> None:
    if cfg.reps < 1:
        raise ValidationError("reps must be >= 1")
    if cfg.workers < 1:
        raise ValidationError("workers must be >= 1")
    if cfg.dim < 1:
        raise ValidationError("dim must be >= 1")
    e = cfg.experiment
    if e in ("infinite-range", "snake-free"):
        _need(cfg, "n", 2)
    elif e in ("conditioned-range", "snake-excursion", "no-return-head"):
        _need(cfg, "n", 1)
    elif e == "head-return-exact":
        _need(cfg, "n", 0)
    elif e == "no-return":
        if cfg.horizon is None:
            cfg.horizon = cfg.n
        _need(cfg, "horizon", 1)
    elif e in ("constant-formula", "suffcond"):
        if cfg.j_max is None:
            cfg.j_max = cfg.n
        _need(cfg, "j_max", 0 if e == "constant-formula" else 1)
    elif e == "green-sum":
        _need(cfg, "n", 2)
    elif e == "brw":
        _need(cfg, "p", 1)
    elif e == "verify":
        if cfg.options.get("level", "fast") not in ("fast", "full"):
            raise ValidationError("verify level must be fast or full")
    if e in ("green", "constant-formula", "suffcond", "green-sum") and cfg.theta().dim <= 2:
        raise ValidationError("Green-function experiments need dim >= 3")


# --------------------------------------------------------------------------
# output


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, Fraction):
        return str(x)
    return x


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def record_row(experiment: str, cfg: ExperimentConfig, rec: EstimateRecord, dim: int | None = None) -> list[str]:
    extra = {k: v for k, v in rec.extra.items() if k not in ("samples",)}
    extra["params"] = rec.params
    if rec.reps == 1:
        extra["warning"] = "single replica: stderr set to 0"
    return [experiment, _fmt(dim if dim is not None else cfg.dim), _fmt(cfg.n), _fmt(cfg.p), _fmt(rec.reps),
            _fmt(cfg.seed), _fmt(float(rec.value)), _fmt(float(rec.stderr)),
            json.dumps(_jsonable(extra), sort_keys=True), f"{rec.elapsed_ms:.1f}"]


def write_csv(rows: list[list[str]], out: str | None, header: list[str] = HEADER) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    text = buf.getvalue()
    if out:
        try:
            Path(out).write_text(text, encoding="utf-8", newline="")
        except OSError as exc:
            raise TreeRangeError(f"cannot write {out}: {exc}") from exc
    else:
        sys.stdout.write(text)
    return text


# --------------------------------------------------------------------------
# experiments


def _green_table(theta, cfg):
    return analytics.GreenTable(theta, int(cfg.options.get("green_radius", 20)))


def _exp_infinite_range(cfg):
    theta, mu = cfg.theta(), cfg.mu()
    return spine.estimate_range_constant(mu, theta, cfg.n, cfg.reps, cfg.seed, cfg.options.get("checkpoints"),
                                         cfg.workers)


def _exp_no_return(cfg):
    return spine.estimate_no_return(cfg.mu(), cfg.theta(), cfg.horizon, cfg.reps, cfg.seed, cfg.workers)


def _exp_constant_formula(cfg):
    theta, mu = cfg.theta(), cfg.mu()
    o = cfg.options
    tab = spine.build_h_table(mu, theta, int(o.get("L", 10)), int(o.get("trees", 20000)),
                              int(o.get("table_seed", cfg.seed + 1)), batches=int(o.get("batches", 8)),
                              fallback=o.get("fallback", "calibrated"), green=_green_table(theta, cfg),
                              workers=cfg.workers)
    return spine.estimate_c_formula(mu, theta, cfg.j_max, cfg.reps, cfg.seed, tab, cfg.workers)


def _exp_conditioned_range(cfg):
    return spine.conditioned_range(cfg.mu(), cfg.theta(), cfg.n, cfg.reps, cfg.seed, cfg.workers)


def _exp_snake_free(cfg):
    return snake.free_range(cfg.theta(), cfg.n, cfg.reps, cfg.seed, cfg.options.get("checkpoints"), cfg.workers)


def _exp_snake_excursion(cfg):
    return snake.excursion_range_estimate(cfg.theta(), cfg.n, cfg.reps, cfg.seed, cfg.workers)


def _exp_head_return_exact(cfg):
    t0 = time.perf_counter()
    theta = cfg.theta()
    k = cfg.n
    if cfg.options.get("exact", False):
        v = snake.head_return_exact(theta, k, exact=True)
        extra = {"fraction": str(v)}
        v = float(v)
    else:
        v = snake.head_return_exact(theta, k)
        extra = {}
    extra["k_times_p"] = k * v
    if theta.dim == 4:
        extra["target"] = 1.0 / (4 * math.pi ** 2 * theta.sigma2 ** 2)
    return EstimateRecord(v, 0.0, 1, {"k": k, "dim": theta.dim}, cfg.seed, (time.perf_counter() - t0) * 1e3, extra)


def _exp_no_return_head(cfg):
    return snake.estimate_no_return_head(cfg.theta(), cfg.n, cfg.reps, cfg.seed, cfg.options.get("p_stop"),
                                         workers=cfg.workers)


def _exp_green(cfg):
    t0 = time.perf_counter()
    theta = cfg.theta()
    x = cfg.options.get("x", [0] * theta.dim)
    g = analytics.green(theta, np.asarray(x, np.int64), eps=float(cfg.options.get("eps", 1e-8)))
    r2 = float(np.dot(x, x))
    extra = {"x": x, "K": g.K, "tail_bound": g.tail_bound, "method": g.method,
             "asymptotic": float(analytics.green_asymptotic(theta, np.asarray(x))[0]) if r2 > 0 else None,
             "r2_times_G": r2 * g.value}
    return EstimateRecord(g.value, 0.0, 1, {"x": x, "dim": theta.dim}, cfg.seed, (time.perf_counter() - t0) * 1e3,
                          extra)


def _exp_green_sum(cfg):
    theta = cfg.theta()
    return analytics.green_sum_along_walk(theta, cfg.n, cfg.reps, cfg.seed, _green_table(theta, cfg),
                                          workers=cfg.workers)


def _exp_suffcond(cfg):
    theta = cfg.theta()
    return analytics.suffcond_diagnostic(cfg.mu(), theta, cfg.j_max, cfg.reps, cfg.seed, _green_table(theta, cfg),
                                         j_from=cfg.options.get("j_from"), alpha=cfg.options.get("alpha"),
                                         workers=cfg.workers)


def _exp_bessel(cfg):
    o = cfg.options
    return analytics.bessel_log_integral(float(o.get("r", 1.0)), float(o.get("t", 100.0)), float(o.get("dt", 1e-3)),
                                         cfg.reps, cfg.seed, workers=cfg.workers)


RUNNERS: dict[str, Callable[[ExperimentConfig], EstimateRecord]] = {
    "infinite-range": _exp_infinite_range,
    "no-return": _exp_no_return,
    "constant-formula": _exp_constant_formula,
    "conditioned-range": _exp_conditioned_range,
    "snake-free": _exp_snake_free,
    "snake-excursion": _exp_snake_excursion,
    "head-return-exact": _exp_head_return_exact,
    "no-return-head": _exp_no_return_head,
    "green": _exp_green,
    "green-sum": _exp_green_sum,
    "suffcond": _exp_suffcond,
    "bessel": _exp_bessel,
}


def _brw_rows(cfg) -> list[list[str]]:
    theta = cfg.theta()
    cap = int(cfg.options.get("progeny_cap", brw.DEFAULT_PROGENY_CAP))
    spatial = cfg.options.get("spatial", True)
    runs = brw.brw_replicas(cfg.p, cfg.mu(), theta if spatial else None, cfg.reps, cfg.seed, cap, cfg.workers)
    return [[str(i), str(cfg.p), str(theta.dim), str(r.range), str(r.progeny), str(r.generations),
             str(int(r.truncated))] for i, r in enumerate(runs)]


# --------------------------------------------------------------------------
# verify


@dataclass
class CheckResult:
    check: str
    passed: bool
    value: float
    detail: dict

    def row(self) -> list[str]:
        return [f"verify:{self.check}", "", "", "", "1", "", _fmt(float(self.value)), "0.0",
                json.dumps(_jsonable({"passed": self.passed, **self.detail}), sort_keys=True), "0.0"]


def _check_kemperman(m_max, k_max):
    rows = analytics.kemperman_grid(m_max, k_max)
    bad = sum(1 for _, _, a, b in rows if a != b)
    return CheckResult("kemperman_grid", bad == 0, bad, {"m_max": m_max, "k_max": k_max, "cells": len(rows)})


def _check_pitman(k_enum, k_norm):
    bad = 0
    for k in range(k_enum + 1):
        enum = snake.pitman_enumerate(k)
        bad += sum(1 for m, v in enum.items() if snake.pitman_pmf(k, m, True) != v)
    drift = max(abs(sum(snake.pitman_pmf(k, m, True) for m in range(k % 2, k + 1, 2)) - 1) for k in range(k_norm + 1))
    return CheckResult("pitman_grid", bad == 0 and drift == 0, bad, {"k_enum": k_enum, "k_norm": k_norm,
                                                                    "norm_drift": float(drift)})


def _check_head_return():
    v = snake.head_return_exact(make_jump_srw(4), 2, exact=True)
    return CheckResult("head_return_k2", v == Fraction(11, 32), float(v), {"exact": str(v)})


def _check_mass(kmax):
    # d = 2 keeps the full support box of theta^{*k} in memory up to k = 1000
    mass, sym = analytics.convolution_mass_drift(make_jump_srw(2), kmax)
    return CheckResult("convolution_mass", mass <= 1e-12, mass, {"dim": 2, "kmax": kmax, "symmetry_drift": sym})


def _check_shift(samples, seed):
    rep = spine.shift_invariance_test(make_geometric_critical(), make_jump_srw(1), samples, seed)
    return CheckResult("shift_invariance", rep["passed"], float(min(min(v.values()) for v in rep["checks"].values())),
                       {"samples": samples, "censored": rep["censored"], "p_values": rep["checks"]})


def _check_green(radius, corrupt):
    tab = analytics.GreenTable(make_jump_srw(4), radius)
    if corrupt:
        tab = tab.with_corruption([1, 0, 0, 0], 1.01)
    defect = analytics.harmonic_defect(tab, min(radius - 1, 10))
    return CheckResult("green_harmonic", defect < 1e-9, defect, {"radius": radius, "corrupted": corrupt})


def _check_visitzero():
    ks = [100, 1000, 10000]
    tab = snake.head_return_table(make_jump_srw(4), ks)
    target = 4 / math.pi ** 2
    err = [abs(tab[k] - target) for k in ks]
    ok = err[2] < err[1] < err[0] and err[2] / target < 0.05
    return CheckResult("visitzero", ok, tab[10000], {"k_times_p": tab, "target": target,
                                                    "rel_err": [e / target for e in err]})


def verify(level: str = "fast", corrupt_green: bool = False, seed: int = 0) -> list[CheckResult]:
    """Exact-oracle suites; each entry names its check and whether it passed."""
    if level not in ("fast", "full"):
        raise ValidationError("level must be fast or full")
    fast = level == "fast"
    out = [
        _check_kemperman(10, 51) if fast else _check_kemperman(20, 201),
        _check_pitman(12 if fast else 20, 64 if fast else 200),
        _check_head_return(),
        _check_mass(200 if fast else 1000),
        _check_green(12 if fast else 30, corrupt_green),
        _check_shift(2000 if fast else 100_000, seed),
    ]
    if not fast:
        out.append(_check_visitzero())
    return out


# --------------------------------------------------------------------------
# entry


def run(cfg: ExperimentConfig) -> tuple[list[list[str]], int]:
    """Validate, dispatch and write the CSV; returns (rows, exit code)."""
    cfg.seed = resolve_seed(cfg.seed)
    validate(cfg)
    if cfg.experiment == "brw":
        rows = _brw_rows(cfg)
        write_csv(rows, cfg.out, BRW_HEADER)
        return rows, 0
    if cfg.experiment == "verify":
        res = verify(cfg.options.get("level", "fast"), bool(cfg.options.get("corrupt_green", False)), cfg.seed)
        rows = [r.row() for r in res]
        write_csv(rows, cfg.out)
        return rows, 0 if all(r.passed for r in res) else 1
    rec = RUNNERS[cfg.experiment](cfg)
    dim = cfg.theta().dim
    rows = [record_row(cfg.experiment, cfg, rec, dim)]
    write_csv(rows, cfg.out)
    return rows, 0
