"""Named experiments that put a simulation next to its analytic value.

A configuration is a flat TOML table::

    experiment = "uniform-convergence"
    dist = "det:2"
    seed = 7
    lambda = 0.1
    N = [6, 10, 14]
    replicas = 10000

Every experiment returns :class:`ReportRow` objects whose pass flag is a
pure function of the numbers in the row (and, for trend criteria, of the
other rows of the same report). The analytic columns never depend on the
simulation, so ``replicas = 0`` yields an analytic-only report.
"""

from __future__ import annotations

import csv
import io
import math
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from . import analytics as an
from .discovery import format_cell, mc_depth_biased, mc_uniform, missed_discovery_bound
from .errors import ConfigError, EmptyReport
from .gw_core import estimate_W_samples, w_second_moment
from .offspring import OffspringDist, parse_offspring

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = (
    "uniform-convergence",
    "uniform-rate",
    "variance-scaling",
    "depth-biased-ratio",
    "kesten-stigum",
    "psi-check",
)

GRID_KEYS = ("N", "lambdas", "alphas", "xs")

DEFAULTS: dict[str, dict] = {
    "uniform-convergence": {"lambda": 0.1, "N": [6, 10, 14], "replicas": 10_000, "tol": 1e-12},
    "uniform-rate": {
        "lambdas": [1e-6, 1e-5, 1e-4, 1e-3, 1e-2],
        "order": 1,
        "tol": 1e-15,
        "band": [0.8, 1.2],
    },
    "variance-scaling": {
        "lambda": 0.1,
        "N": [8, 10, 12],
        "replicas": 100_000,
        "tol": 1e-12,
        "n_boot": 200,
        "se_multiple": 4.0,
        "rel_band": 0.25,
    },
    "depth-biased-ratio": {
        "alphas": [0.5, 0.8, 0.9, 0.95],
        "eps": 1e-3,
        "replicas": 0,
        "inner_replicas": 10_000,
        "depth_eps": 1e-6,
        "tol": 1e-10,
        "engine": "auto",
        "band": [0.6, 1.1],
    },
    "kesten-stigum": {"K": 20, "replicas": 10_000, "bias_allowance": 0.01},
    "psi-check": {
        "xs": [1e-7, 1e-5, 1e-3],
        "m": 2.0,
        "v": 1.0,
        "tol": 1e-12,
        "band": [0.85, 1.15],
    },
}

CRITERIA = {
    "uniform-convergence": (
        "every row |rho_hat_N - rho| <= 3 se + 2 m^-(N+1); exact gap |rho_N - rho| decreasing in N"
    ),
    "uniform-rate": (
        "ratio strictly monotone toward its limit as lambda decreases; "
        "ratio at the smallest lambda inside band"
    ),
    "variance-scaling": (
        "deterministic G: every row |sim - analytic| <= se_multiple bootstrap se; "
        "random G: every row within se_multiple bootstrap se of the exact finite-N value, "
        "|ratio - 1| decreasing in N and within rel_band at the largest N"
    ),
    "depth-biased-ratio": (
        "scaled = E(R)(1-alpha)^2 increasing in alpha, inside band at the largest alpha; "
        "selected-count value inside its bracket; "
        "simulation (if any) within 3 combined se + tail + missed-discovery bound"
    ),
    "kesten-stigum": (
        "mean(W) within 3 se of 1; E((1-W)^2) within 3 se + bias_allowance of Var(G)/(m(m-1))"
    ),
    "psi-check": (
        "ratio strictly monotone toward E(V) as x decreases; ratio at the smallest x inside band"
    ),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    dist: str
    params: dict
    seed: int = 0
    out: str | None = None

    def offspring(self) -> OffspringDist:
        return parse_offspring(self.dist)

    def echo(self) -> str:
        items = [f"experiment={self.experiment}", f"dist={self.dist}"]
        items += [f"{k}={_echo_value(v)}" for k, v in sorted(self.params.items())]
        return ";".join(items)


def _echo_value(v) -> str:
    if isinstance(v, (list, tuple)):
        return "[" + ",".join(_echo_value(x) for x in v) + "]"
    return repr(v) if isinstance(v, float) else str(v)


@dataclass
class ReportRow:
    """One parameter point of an experiment.

    ``sim``/``sim_se`` hold the Monte-Carlo estimate (NaN when the row is
    analytic-only), ``analytic``/``analytic_se``/``tail_bound`` the oracle.
    """

    experiment: str
    point: dict
    sim: float
    sim_se: float
    analytic: float
    analytic_se: float
    tail_bound: float
    ratio: float
    passed: bool = True
    extras: dict = field(default_factory=dict)

    def columns(self) -> list[str]:
        base = ["experiment", *self.point]
        base += ["sim", "sim_se", "analytic", "analytic_se", "tail_bound", "ratio"]
        return base + list(self.extras) + ["pass"]

    def cells(self) -> list:
        vals = [self.experiment, *self.point.values()]
        vals += [self.sim, self.sim_se, self.analytic, self.analytic_se, self.tail_bound]
        vals += [self.ratio, *self.extras.values(), "pass" if self.passed else "fail"]
        return vals


@dataclass
class Report:
    config: ExperimentConfig
    rows: list[ReportRow]
    criterion: str

    @property
    def passed(self) -> bool:
        return bool(self.rows) and all(r.passed for r in self.rows)


# -- configuration -----------------------------------------------------------


def parse_value(text: str):
    """Parse an override value as a TOML value, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def parse_overrides(items: Sequence[str]) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, value = item.split("=", 1)
        out[key.strip()] = parse_value(value.strip())
    return out


def make_config(table: dict, overrides: dict | None = None) -> ExperimentConfig:
    """Validate a flat key-value table and fill per-experiment defaults."""
    table = dict(table)
    if overrides:
        table.update(overrides)
    name = table.pop("experiment", None)
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    dist = table.pop("dist", "det:2")
    if name == "psi-check":
        dist = str(dist)
    else:
        parse_offspring(str(dist))
    seed = table.pop("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    out = table.pop("out", None)
    params = dict(DEFAULTS[name])
    unknown = set(table) - set(params) - {"workers"}
    if unknown:
        raise ConfigError(f"unknown keys for {name}: {', '.join(sorted(unknown))}")
    params.update(table)
    params.pop("workers", None)
    for key in GRID_KEYS:
        if key in params:
            grid = params[key]
            if not isinstance(grid, list) or not grid:
                raise ConfigError(f"{key} must be a nonempty list")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ConfigError(f"{key} must be sorted in strictly increasing order")
    reps = params.get("replicas")
    if reps is not None and (not isinstance(reps, int) or reps == 1 or reps < 0):
        raise ConfigError(f"replicas must be 0 (analytic only) or >= 2, got {reps!r}")
    return ExperimentConfig(name, str(dist), params, seed, out)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            table = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return make_config(table, overrides)


# -- criteria helpers --------------------------------------------------------


def monotone_toward(values: Sequence[float], target: float) -> bool:
    """Values move strictly in one direction and get strictly closer to ``target``."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return bool(np.all(np.isfinite(v)))
    step = np.diff(v)
    one_way = bool(np.all(step > 0) or np.all(step < 0))
    closer = bool(np.all(np.diff(np.abs(v - target)) < 0))
    return one_way and closer


def in_band(value: float, band: Sequence[float]) -> bool:
    return band[0] < value < band[1]


def bootstrap_se(
    values: np.ndarray,
    statistic: Callable[[np.ndarray], float],
    n_boot: int,
    rng: np.random.Generator,
) -> float:
    """Standard deviation of ``statistic`` over ``n_boot`` resamples with replacement."""
    values = np.asarray(values)
    stats = np.empty(n_boot)
    for b in range(n_boot):
        idx = rng.integers(0, len(values), len(values))
        stats[b] = statistic(values[idx])
    return float(np.std(stats, ddof=1))


def _bootstrap_rng(seed: int, tag: int) -> np.random.Generator:
    # Three-word entropy keeps this stream apart from the two-word replica streams.
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, tag, 0xB007])))


# -- experiments -------------------------------------------------------------


def _uniform_convergence(cfg: ExperimentConfig, workers: int) -> list[ReportRow]:
    p = cfg.params
    dist = cfg.offspring()
    lam = float(p["lambda"])
    rho = an.rho_series(dist, lam, p["tol"])
    rows = []
    for N in p["N"]:
        exact = an.rho_finite(dist, lam, N)
        allowance = 2.0 * dist.m ** (-(N + 1))
        if p["replicas"]:
            s = mc_uniform(dist, N, lam, p["replicas"], cfg.seed, workers=workers)
            sim, se = s.rho_hat, s.se_rho
            ok = abs(sim - rho.value) <= 3.0 * se + allowance
        else:
            sim, se, ok = math.nan, math.nan, True
        rows.append(
            ReportRow(
                cfg.experiment,
                {"lambda": lam, "N": N},
                sim,
                se,
                rho.value,
                0.0,
                rho.tail_bound,
                sim / rho.value,
                ok,
                {"rho_N": exact, "exact_gap": abs(exact - rho.value), "allowance": allowance},
            )
        )
    gaps = [r.extras["exact_gap"] for r in rows]
    if any(b >= a for a, b in zip(gaps, gaps[1:])):
        for r in rows:
            r.passed = False
    return rows


def _uniform_rate(cfg: ExperimentConfig, workers: int) -> list[ReportRow]:
    p = cfg.params
    dist = cfg.offspring()
    order = int(p["order"])
    if order not in (1, 2):
        raise ConfigError("order must be 1 or 2")
    m = dist.m
    rows = []
    for lam in p["lambdas"]:
        lam = float(lam)
        if order == 1:
            res = an.rho_series(dist, lam, p["tol"])
            scale = lam * an.log_m(1.0 / lam, m)
            target = 1.0
        elif dist.is_deterministic:
            res = an.rho2_deterministic_series(dist.min_children, lam, p["tol"])
            scale = lam * an.log_m(lam, m) ** 2
            target = 1.0
        else:
            res = an.rho2_nondeterministic(dist, lam, p["tol"])
            scale = (lam * an.log_m(1.0 / lam, m)) ** 2
            target = dist.var / (m * m - m)
        rows.append(
            ReportRow(
                cfg.experiment,
                {"lambda": lam, "order": order},
                math.nan,
                math.nan,
                res.value,
                res.se,
                res.tail_bound,
                res.value / scale,
                True,
                {"target": target, "terms_used": res.terms_used},
            )
        )
    _trend_and_band(rows, key=lambda r: -r.point["lambda"], band=p["band"], relative=True)
    return rows


def _trend_and_band(rows, key, band, relative) -> None:
    """Order rows toward the limit, check the trend there and the band at the last point."""
    ordered = sorted(rows, key=key)
    target = ordered[-1].extras["target"]
    lo, hi = (band[0] * target, band[1] * target) if relative else band
    ok = monotone_toward([r.ratio for r in ordered], target) and in_band(
        ordered[-1].ratio, (lo, hi)
    )
    for r in rows:
        r.passed = r.passed and ok


def _variance_scaling(cfg: ExperimentConfig, workers: int) -> list[ReportRow]:
    p = cfg.params
    dist = cfg.offspring()
    lam = float(p["lambda"])
    det = dist.is_deterministic
    if det:
        ref = an.rho2_deterministic_series(dist.min_children, lam, p["tol"])
    else:
        ref = an.rho2_nondeterministic(dist, lam, p["tol"])
    rows = []
    for N in p["N"]:
        ET = an.expected_tree_size(dist.m, N)
        norm = ET if det else ET * ET
        exact = an.discovered_moments(dist, lam, N)[1] / norm
        extras = {
            "normalization": "E(T_N)" if det else "E(T_N)^2",
            "target": 1.0,
            "exact_finite_N": exact,
        }
        if p["replicas"]:
            s = mc_uniform(dist, N, lam, p["replicas"], cfg.seed, workers=workers)
            sim = float(np.var(s.R, ddof=1)) / norm
            se = bootstrap_se(
                s.R.astype(float),
                lambda x: float(np.var(x, ddof=1)) / norm,
                int(p["n_boot"]),
                _bootstrap_rng(cfg.seed, N),
            )
        else:
            sim, se = math.nan, math.nan
        ok = True
        if det and p["replicas"]:
            ok = abs(sim - ref.value) <= p["se_multiple"] * se + ref.tail_bound
        elif p["replicas"]:
            ok = abs(sim - exact) <= p["se_multiple"] * se
        rows.append(
            ReportRow(
                cfg.experiment,
                {"lambda": lam, "N": N},
                sim,
                se,
                ref.value,
                ref.se,
                ref.tail_bound,
                sim / ref.value,
                ok,
                extras,
            )
        )
    if not det and p["replicas"]:
        band = (1.0 - p["rel_band"], 1.0 + p["rel_band"])
        _trend_and_band(rows, key=lambda r: r.point["N"], band=band, relative=False)
    return rows


def _depth_biased_ratio(cfg: ExperimentConfig, workers: int) -> list[ReportRow]:
    p = cfg.params
    dist = cfg.offspring()
    rows = []
    for alpha in p["alphas"]:
        alpha = float(alpha)
        if dist.is_deterministic:
            ref = an.mean_R_alpha(dist, alpha, p["inner_replicas"], p["depth_eps"], cfg.seed)
        else:
            # Profiles to the inner horizon overflow int64 once alpha is close to one.
            ref = an.mean_R_alpha_exact(dist, alpha, p["tol"])
        bounds = an.selected_count_bounds(alpha, dist.m)
        bracket_ok = (
            bounds.lower - bounds.tail_bound <= bounds.exact <= bounds.upper + bounds.tail_bound
        )
        extras = {
            "scaled": ref.value * (1.0 - alpha) ** 2,
            "target": 1.0,
            "method": ref.method,
            "count_lower": bounds.lower,
            "count_exact": bounds.exact,
            "count_upper": bounds.upper,
            "depth": math.nan,
            "engine": "",
            "mean_marks": math.nan,
            "ratio_hat": math.nan,
        }
        ok = bracket_ok
        if p["replicas"]:
            s = mc_depth_biased(
                dist, alpha, p["eps"], p["replicas"], cfg.seed, engine=p["engine"], workers=workers
            )
            sim, se = s.mean_R, s.se_R
            extras.update(
                depth=s.depth, engine=s.engine, mean_marks=s.mean_marks, ratio_hat=s.ratio_hat
            )
            slack = 3.0 * math.hypot(se, ref.se) + ref.tail_bound
            slack += missed_discovery_bound(alpha, s.depth) if alpha > 0 else 0.0
            ok = ok and abs(sim - ref.value) <= slack
        else:
            sim, se = math.nan, math.nan
        rows.append(
            ReportRow(
                cfg.experiment,
                {"alpha": alpha, "eps": p["eps"]},
                sim,
                se,
                ref.value,
                ref.se,
                ref.tail_bound,
                sim / ref.value,
                ok,
                extras,
            )
        )
    scaled = [r.extras["scaled"] for r in sorted(rows, key=lambda r: r.point["alpha"])]
    trend_ok = all(b > a for a, b in zip(scaled, scaled[1:])) and in_band(scaled[-1], p["band"])
    for r in rows:
        r.passed = r.passed and trend_ok
    return rows


def _kesten_stigum(cfg: ExperimentConfig, workers: int) -> list[ReportRow]:
    p = cfg.params
    dist = cfg.offspring()
    K = int(p["K"])
    if p["replicas"] < 2:
        raise ConfigError("kesten-stigum needs replicas >= 2")
    w = estimate_W_samples(dist, K, p["replicas"], cfg.seed, max_nodes=None, workers=workers)
    limit = w_second_moment(dist)
    mean_ok = abs(w.mean - 1.0) <= 3.0 * w.mean_se
    sm, sm_se = w.centered_second_moment, w.centered_second_moment_se
    sm_ok = abs(sm - limit) <= 3.0 * sm_se + p["bias_allowance"]
    point = {"K": K}
    return [
        ReportRow(
            cfg.experiment,
            {"quantity": "mean_W", **point},
            w.mean,
            w.mean_se,
            1.0,
            0.0,
            0.0,
            w.mean,
            mean_ok,
            {"horizon_expectation": 1.0},
        ),
        ReportRow(
            cfg.experiment,
            {"quantity": "second_moment", **point},
            sm,
            sm_se,
            limit,
            0.0,
            0.0,
            sm / limit if limit else math.nan,
            sm_ok,
            {"horizon_expectation": w_second_moment(dist, K)},
        ),
    ]


def _psi_check(cfg: ExperimentConfig, workers: int) -> list[ReportRow]:
    p = cfg.params
    m = float(p["m"])
    v = float(p["v"])
    rows = []
    for x in p["xs"]:
        res = an.psi_harmonic_sum(float(x), m, v=v, tol=p["tol"], seed=cfg.seed)
        rows.append(
            ReportRow(
                cfg.experiment,
                {"x": float(x), "m": m, "v": v},
                math.nan,
                math.nan,
                res.value,
                res.se,
                res.tail_bound,
                res.value / (x * an.log_m(1.0 / x, m)),
                True,
                {"target": v},
            )
        )
    _trend_and_band(rows, key=lambda r: -r.point["x"], band=p["band"], relative=True)
    return rows


RUNNERS = {
    "uniform-convergence": _uniform_convergence,
    "uniform-rate": _uniform_rate,
    "variance-scaling": _variance_scaling,
    "depth-biased-ratio": _depth_biased_ratio,
    "kesten-stigum": _kesten_stigum,
    "psi-check": _psi_check,
}


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> Report:
    rows = RUNNERS[cfg.experiment](cfg, workers)
    return Report(cfg, rows, CRITERIA[cfg.experiment])


# -- CSV ---------------------------------------------------------------------


def render_csv(report: Report, timestamp: bool = True) -> str:
    if not report.rows:
        raise EmptyReport("refusing to write a report without rows")
    cfg = report.config
    buf = io.StringIO()
    buf.write(f"# experiment: {cfg.experiment}\n")
    buf.write(f"# config: {cfg.echo()}\n")
    buf.write(f"# seed: {cfg.seed}\n")
    buf.write(f"# version: gwdiscovery {__version__}\n")
    buf.write(f"# criterion: {report.criterion}\n")
    if timestamp:
        buf.write(f"# timestamp: {datetime.now(timezone.utc).isoformat(timespec='seconds')}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(report.rows[0].columns())
    for row in report.rows:
        writer.writerow([format_cell(c) for c in row.cells()])
    return buf.getvalue()


def emit_csv(report: Report, path, timestamp: bool = True) -> Path:
    """Write ``report`` to ``path``; nothing is created when it has no rows."""
    text = render_csv(report, timestamp)
    path = Path(path)
    path.write_text(text)
    return path
