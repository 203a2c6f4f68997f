"""Experiment configuration, parallel Monte Carlo runs, CSV/JSON persistence.

A configuration is one JSON document.  Trial t of grid cell g (cells are the
n_p x n_q product in row-major order) runs with seed
derive_seed(master_seed, g, t), so results never depend on the worker count.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .conf_class import ComplexityParams
from .instances import TOL, InstanceError, load_instance
from .seeding import derive_seed
from .transfer import TransferParams, TrialReport, run_strong_transfer, run_weak_transfer


class ConfigError(ValueError):
    """Invalid configuration; ``path`` locates the first violation."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


ALGORITHMS = ("weak", "strong", "both")
CONSTANT_KEYS = {
    "C0": "c0", "C": "C", "C_prime": "C_prime", "C1": "C1", "C2": "C2", "C3": "C3", "C4": "C4",
    "C5": "C5", "C6": "C6", "C7": "C7", "bcc_C": "bcc_C", "bcc_beta": "bcc_beta", "d_vc": "d_vc",
}
TRANSFER_KEYS = ("c_flat", "loc_multiplier", "regression_c0", "c_mu")
CONFIG_KEYS = {"instance", "algorithm", "n_p", "n_q", "tau", "trials", "seed", "q_strong",
               "eps_tilde_trials", "constants", "output"}
OUTPUT_KEYS = {"csv", "summary"}

CSV_COLUMNS = ("grid", "trial", "seed", "algo", "np", "nq", "case", "chosen", "excess_q", "eps_q", "eps_p",
               "delta_eps_p", "bound", "bound_ok", "weak_bound", "weak_ok", "strong_bound", "eps_tilde",
               "intersect", "target_only_excess", "source_only_excess")


@dataclass(frozen=True)
class ExperimentConfig:
    instance: Any
    algorithm: str
    n_p: tuple[int, ...]
    n_q: tuple[int, ...]
    tau: float
    trials: int
    seed: int
    params: TransferParams
    csv_path: str | None = None
    summary_path: str | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def grid(self) -> list[tuple[int, int]]:
        return [(a, b) for a in self.n_p for b in self.n_q]

    @property
    def algorithms(self) -> tuple[str, ...]:
        return ("weak", "strong") if self.algorithm == "both" else (self.algorithm,)


def _int_list(value, path: str, minimum: int) -> tuple[int, ...]:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "must be a non-empty list of integers")
    out = []
    for i, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or v != int(v) or v < minimum:
            raise ConfigError(f"{path}[{i}]", f"must be an integer >= {minimum}")
        out.append(int(v))
    return tuple(out)


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(path, "must be a finite number")
    return float(value)


def parse_config(doc: dict, base_dir: str | Path | None = None) -> ExperimentConfig:
    """Validate a configuration document; raises ConfigError at the first problem."""
    if not isinstance(doc, dict):
        raise ConfigError("$", "configuration must be a JSON object")
    for key in doc:
        if key not in CONFIG_KEYS:
            raise ConfigError(f"$.{key}", "unknown key")
    if "instance" not in doc:
        raise ConfigError("$.instance", "missing")
    src = doc["instance"]
    if isinstance(src, str) and src != "T1" and base_dir is not None and not Path(src).is_absolute():
        src = str(Path(base_dir) / src)
    try:
        inst = load_instance(src)
    except InstanceError as exc:
        sub = exc.path[1:] if exc.path.startswith("$") else "." + exc.path
        where = "$.instance" + (sub if isinstance(src, dict) else f" ({src}) {exc.path}")
        raise ConfigError(where.rstrip(), exc.message) from exc
    except (OSError, ValueError) as exc:
        raise ConfigError("$.instance", str(exc)) from exc
    algo = doc.get("algorithm", "weak")
    if algo not in ALGORITHMS:
        raise ConfigError("$.algorithm", f"must be one of {list(ALGORITHMS)}")
    n_p = _int_list(doc.get("n_p", [0]), "$.n_p", 0)
    n_q = _int_list(doc.get("n_q", [0]), "$.n_q", 0)
    if algo != "weak" and min(n_q) < 1:
        raise ConfigError("$.n_q", "the strong algorithm needs n_q >= 1")
    tau = _number(doc.get("tau", 0.05), "$.tau")
    if not 0 < tau <= 1:
        raise ConfigError("$.tau", "must lie in (0, 1]")
    trials = doc.get("trials", 1)
    if isinstance(trials, bool) or not isinstance(trials, int) or trials < 1:
        raise ConfigError("$.trials", "must be an integer >= 1")
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("$.seed", "must be a non-negative integer")
    consts = doc.get("constants", {})
    if not isinstance(consts, dict):
        raise ConfigError("$.constants", "must be an object")
    cp_kw, tp_kw = {}, {}
    for key, val in consts.items():
        path = f"$.constants.{key}"
        if key in CONSTANT_KEYS:
            if key == "d_vc":
                if isinstance(val, bool) or not isinstance(val, int) or val < 1:
                    raise ConfigError(path, "must be an integer >= 1")
                cp_kw["d_vc"] = val
            else:
                cp_kw[CONSTANT_KEYS[key]] = _number(val, path)
        elif key in TRANSFER_KEYS:
            tp_kw[key] = _number(val, path)
        else:
            raise ConfigError(path, "unknown constant")
    try:
        cp = ComplexityParams(**cp_kw)
    except ValueError as exc:
        raise ConfigError("$.constants", str(exc)) from exc
    q_strong = doc.get("q_strong", "rootn")
    if q_strong not in ("rootn", "localized"):
        raise ConfigError("$.q_strong", "must be 'rootn' or 'localized'")
    ett = doc.get("eps_tilde_trials", 200)
    if isinstance(ett, bool) or not isinstance(ett, int) or ett < 100:
        raise ConfigError("$.eps_tilde_trials", "must be an integer >= 100")
    try:
        params = TransferParams(cp, q_strong, eps_tilde_trials=ett, **tp_kw)
    except ValueError as exc:
        raise ConfigError("$.constants", str(exc)) from exc
    out = doc.get("output", {})
    if not isinstance(out, dict):
        raise ConfigError("$.output", "must be an object")
    for key, val in out.items():
        if key not in OUTPUT_KEYS:
            raise ConfigError(f"$.output.{key}", "unknown key")
        if not isinstance(val, str):
            raise ConfigError(f"$.output.{key}", "must be a path string")
    return ExperimentConfig(inst, algo, n_p, n_q, tau, trials, seed, params,
                            out.get("csv"), out.get("summary"), doc)


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except OSError as exc:
        raise ConfigError("$", f"cannot read {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON: {exc}") from exc
    return parse_config(doc, p.parent)


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------


def _run_one(args) -> tuple[int, int, int, TrialReport]:
    inst, algo, a, n_p, n_q, tau, params, seed, g, t = args
    start = time.perf_counter()
    runner = run_weak_transfer if algo == "weak" else run_strong_transfer
    rep = runner(inst, n_p, n_q, tau, params, seed=seed, trial=t)
    rep.wall_time = time.perf_counter() - start
    return g, t, a, rep


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def trial_row(g: int, rep: TrialReport) -> dict[str, Any]:
    row = rep.as_row()
    row["grid"] = g
    row["np"], row["nq"] = row.pop("n_p"), row.pop("n_q")
    row["weak_ok"] = bool(rep.excess_q <= rep.weak_bound * (1 + 1e-9) + TOL)
    return {k: row[k] for k in CSV_COLUMNS}


def rows_to_csv(rows: list[dict[str, Any]], columns=CSV_COLUMNS) -> str:
    """RFC-4180 CSV with floats at 17 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def write_text(path: str | Path, text: str) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", newline="") as fh:
        fh.write(text)


@dataclass
class ExperimentResult:
    rows: list[dict[str, Any]]
    summary: dict[str, Any]
    csv_text: str
    wall_time: float


def run_experiment(cfg: ExperimentConfig, threads: int = 1, out_dir: str | Path | None = None
                   ) -> ExperimentResult:
    """Run every (grid cell, trial) pair and persist rows and summary.

    Output paths in the config are resolved against ``out_dir`` when given.
    """
    tasks = []
    for g, (n_p, n_q) in enumerate(cfg.grid):
        for t in range(cfg.trials):
            seed = derive_seed(cfg.seed, g, t)
            for a, algo in enumerate(cfg.algorithms):
                tasks.append((cfg.instance, algo, a, n_p, n_q, cfg.tau, cfg.params, seed, g, t))
    start = time.perf_counter()
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_one, tasks, chunksize=max(1, len(tasks) // (4 * threads))))
    else:
        results = [_run_one(a) for a in tasks]
    results.sort(key=lambda r: (r[0], r[1], r[2]))
    rows = [trial_row(g, rep) for g, _, _, rep in results]
    summary = summarize(rows, cfg)
    text = rows_to_csv(rows)
    for attr, payload in (("csv_path", text), ("summary_path", json.dumps(summary, indent=2, sort_keys=True))):
        target = getattr(cfg, attr)
        if target:
            p = Path(out_dir) / target if out_dir is not None and not Path(target).is_absolute() else Path(target)
            write_text(p, payload)
    return ExperimentResult(rows, summary, text, time.perf_counter() - start)


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


def _finite_mean(vals: list[float]) -> float | None:
    v = [x for x in vals if not math.isnan(x)]
    return float(np.mean(v)) if v else None


def summarize(rows: list[dict[str, Any]], cfg: ExperimentConfig | None = None) -> dict[str, Any]:
    """Per-cell statistics, all recomputable from the CSV rows."""
    cells: dict[tuple[int, str], list[dict[str, Any]]] = {}
    for r in rows:
        cells.setdefault((int(r["grid"]), str(r["algo"])), []).append(r)
    out_cells = []
    for g, algo in sorted(cells):
        rs = cells[(g, algo)]
        ex = np.array([float(r["excess_q"]) for r in rs])
        cases: dict[str, int] = {}
        for r in rs:
            cases[str(r["case"])] = cases.get(str(r["case"]), 0) + 1
        out_cells.append({
            "grid": g,
            "algo": algo,
            "np": int(rs[0]["np"]),
            "nq": int(rs[0]["nq"]),
            "trials": len(rs),
            "mean_excess_q": float(np.mean(ex)),
            "median_excess_q": float(np.quantile(ex, 0.5, method="inverted_cdf")),
            "q90_excess_q": float(np.quantile(ex, 0.9, method="inverted_cdf")),
            "coverage": {
                "bound": float(np.mean([_as_bool(r["bound_ok"]) for r in rs])),
                "weak_bound": float(np.mean([_as_bool(r["weak_ok"]) for r in rs])),
            },
            "baselines": {
                "target_only_mean": _finite_mean([float(r["target_only_excess"]) for r in rs]),
                "source_only_mean": _finite_mean([float(r["source_only_excess"]) for r in rs]),
            },
            "cases": dict(sorted(cases.items())),
        })
    summary: dict[str, Any] = {"cells": out_cells}
    if cfg is not None:
        summary.update({"algorithm": cfg.algorithm, "tau": cfg.tau, "trials": cfg.trials, "seed": cfg.seed})
    return summary


def _as_bool(v) -> bool:
    if isinstance(v, str):
        if v not in ("true", "false"):
            raise ValueError(f"not a boolean field: {v!r}")
        return v == "true"
    return bool(v)


def read_rows(csv_path: str | Path) -> list[dict[str, str]]:
    with open(csv_path, newline="") as fh:
        return list(csv.DictReader(fh))


def wilson_interval(failures: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval; zero failures use the rule of three, [0, 3/T]."""
    if trials < 1:
        raise ValueError("need at least one trial")
    if failures == 0:
        return 0.0, min(1.0, 3.0 / trials)
    p = failures / trials
    den = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / den
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class CoverageRow:
    bound: str
    trials: int
    failures: int
    rate: float
    ci_low: float
    ci_high: float


def coverage_report(csv_path: str | Path) -> list[CoverageRow]:
    """Empirical failure rate of each recorded bound with a 95% interval."""
    rows = read_rows(csv_path)
    if not rows:
        raise ValueError(f"{csv_path} contains no trial rows")
    out = []
    for name, col in (("bound", "bound_ok"), ("weak_bound", "weak_ok")):
        if col not in rows[0]:
            continue
        fails = sum(not _as_bool(r[col]) for r in rows)
        lo, hi = wilson_interval(fails, len(rows))
        out.append(CoverageRow(name, len(rows), fails, fails / len(rows), lo, hi))
    if not out:
        raise ValueError(f"{csv_path} has no bound columns")
    return out
