"""Experiment presets and the harness that turns a spec into a curve file.

A curve file is CSV preceded by ``#`` comment lines.  The header echoes the
fully resolved spec as JSON, so ``spec_from_header`` rebuilds a spec that
reproduces the file byte for byte.  Rows are ordered sweep-major,
series-minor; a row whose computation failed carries an empty value and a
message in the ``error`` column instead of a NaN.
"""

from __future__ import annotations

import copy
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import __version__, analytic, design, montecarlo
from .config import ConfigError, SystemConfig, reference_distance

EXPERIMENTS = (
    "energy-gap",
    "mse-vs-np",
    "snr-vs-np",
    "crossover-region",
    "min-pilot-length",
    "optimal-cluster",
    "ser",
)

# keys of ``fixed`` that are SystemConfig fields; r0 = None means the preset distance
CONFIG_KEYS = ("lam", "alpha", "r0", "n_a", "n_p", "epsilon_trunc")


class SpecError(ValueError):
    """The experiment spec is malformed; the message names the offending field."""


@dataclass
class ExperimentSpec:
    experiment: str
    sweep: dict  # {"name": str, "grid": [..]}
    fixed: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    seed: int = 0
    trials: int = 100_000
    output_path: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        unknown = set(data) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise SpecError(f"unknown spec fields: {sorted(unknown)}")
        if "experiment" not in data or "sweep" not in data:
            raise SpecError("spec needs 'experiment' and 'sweep'")
        return cls(**copy.deepcopy(data))


@dataclass
class Row:
    sweep: float
    series: str
    value: float | None
    stderr: float | None = None
    error: str = ""


@dataclass
class CurveOutput:
    spec: ExperimentSpec
    rows: list[Row]
    version: str = __version__

    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"# ncjt {self.version}\n")
        buf.write(f"# experiment: {self.spec.experiment}\n")
        # output_path is left out so the same run written elsewhere is byte-identical
        header = {k: v for k, v in self.spec.to_dict().items() if k != "output_path"}
        buf.write("# spec: " + json.dumps(header, sort_keys=True) + "\n")
        buf.write("sweep,series,value,stderr,error\n")
        for r in self.rows:
            buf.write(f"{_fmt(r.sweep)},{r.series},{_fmt(r.value)},{_fmt(r.stderr)},{r.error}\n")
        return buf.getvalue()

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_text())


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def spec_from_header(text: str) -> ExperimentSpec:
    for line in text.splitlines():
        if line.startswith("# spec: "):
            return ExperimentSpec.from_dict(json.loads(line[len("# spec: "):]))
    raise SpecError("no '# spec:' line in header")


def parse_rows(text: str) -> list[dict]:
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    keys = lines[0].split(",")
    return [dict(zip(keys, l.split(",", len(keys) - 1))) for l in lines[1:]]


# -- presets -------------------------------------------------------------------------

ALPHA_FIG_ENERGY = [2.1, 2.5, 3.0, 3.67, 4.0, 5.0]
ALPHA_GRID = [round(2.1 + 0.1 * i, 2) for i in range(30)]  # 2.1 .. 5.0
if 3.67 not in ALPHA_GRID:
    ALPHA_GRID = sorted(ALPHA_GRID + [3.67])

PRESETS: dict[str, dict] = {
    "energy-gap": dict(
        sweep={"name": "n_a", "grid": [1, 2, 3, 5, 7, 10, 15, 20, 30, 50, 70, 100]},
        fixed={"lam": 1.0},
        series={"alphas": ALPHA_FIG_ENERGY},
    ),
    "mse-vs-np": dict(
        sweep={"name": "n_p", "grid": [1, 2, 4, 6, 8, 10, 15, 20, 30, 40, 60, 80, 100]},
        fixed={"lam": 1.0, "alpha": 3.67},
        series={"n_as": [1, 2, 4, 8], "snr0_dbs": [0.0, 40.0]},
    ),
    "snr-vs-np": dict(
        sweep={"name": "n_p", "grid": [1, 2, 3, 5, 7, 10, 11, 15, 20, 30, 50, 70, 100, 150, 200]},
        fixed={"lam": 1.0, "snr0_db": 50.0},
        series={"alphas": [3.67, 5.0], "n_as": [1, 2, 4], "best_scan": 64},
    ),
    "crossover-region": dict(
        sweep={"name": "snr0_db", "grid": [float(s) for s in range(-20, 61, 5)]},
        fixed={"lam": 1.0},
        series={"alphas": [2.5, 3.0, 3.5, 3.67, 4.0, 4.5, 5.0], "np_cap": 1e6},
    ),
    "min-pilot-length": dict(
        sweep={"name": "snr0_db", "grid": [float(s) for s in range(0, 61, 5)]},
        fixed={"lam": 1.0, "gamma_db": -1.0},
        series={"alphas": [3.67, 5.0], "n_as": [1, 2], "best_scan": 30, "np_cap": 10**7},
    ),
    "optimal-cluster": dict(
        sweep={"name": "alpha", "grid": ALPHA_GRID},
        fixed={"lam": 1.0},
        series={"gamma_dbs": [-3.0, -10.0], "scan_cap": 1000},
    ),
    "ser": dict(
        sweep={"name": "snr0_db", "grid": [20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0]},
        fixed={"lam": 1.0, "alpha": 3.67, "gamma_db": -1.0},
        series={"fixed_np": 50, "symbols_per_trial": 10, "best_scan": 30},
    ),
}


def preset(experiment: str, seed: int = 0, trials: int | None = None) -> ExperimentSpec:
    if experiment not in PRESETS:
        raise SpecError(f"experiment must be one of {EXPERIMENTS}, got {experiment!r}")
    p = copy.deepcopy(PRESETS[experiment])
    spec = ExperimentSpec(experiment=experiment, seed=seed, **p)
    if trials is not None:
        spec.trials = trials
    return spec


# -- validation and resolution ----------------------------------------------------------


def resolve(spec: ExperimentSpec) -> ExperimentSpec:
    """Validate and fill defaults (preset r0) so the header is self-contained."""
    if spec.experiment not in EXPERIMENTS:
        raise SpecError(f"experiment: must be one of {EXPERIMENTS}, got {spec.experiment!r}")
    sweep = spec.sweep
    if not isinstance(sweep, dict) or set(sweep) != {"name", "grid"}:
        raise SpecError("sweep: must be an object with 'name' and 'grid'")
    expected = PRESETS[spec.experiment]["sweep"]["name"]
    if sweep["name"] != expected:
        raise SpecError(f"sweep.name: {spec.experiment} sweeps {expected!r}, got {sweep['name']!r}")
    grid = list(sweep["grid"])
    if not grid:
        raise SpecError("sweep.grid: must be non-empty")
    if any(not isinstance(g, (int, float)) or isinstance(g, bool) for g in grid):
        raise SpecError("sweep.grid: entries must be numbers")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise SpecError("sweep.grid: must be strictly increasing")
    if spec.trials < 1:
        raise SpecError("trials: must be >= 1")
    if not isinstance(spec.seed, int) or spec.seed < 0:
        raise SpecError("seed: must be a non-negative integer")

    out = copy.deepcopy(spec)
    defaults = PRESETS[spec.experiment]
    for key, val in defaults["series"].items():
        out.series.setdefault(key, copy.deepcopy(val))
    unknown = set(out.series) - set(defaults["series"])
    if unknown:
        raise SpecError(f"series: unknown keys {sorted(unknown)} for {spec.experiment}")
    for key, val in defaults["fixed"].items():
        out.fixed.setdefault(key, val)
    allowed = set(CONFIG_KEYS) | {"snr0_db", "gamma_db"}
    unknown = set(out.fixed) - allowed
    if unknown:
        raise SpecError(f"fixed: unknown keys {sorted(unknown)}")
    lam = float(out.fixed.get("lam", 1.0))
    if out.fixed.get("r0") is None:
        out.fixed["r0"] = reference_distance(lam)
    try:
        base_config(out)
    except (ConfigError, TypeError) as exc:
        raise SpecError(f"fixed: {exc}") from exc
    return out


def base_config(spec: ExperimentSpec) -> SystemConfig:
    kw = {k: spec.fixed[k] for k in CONFIG_KEYS if k in spec.fixed}
    return SystemConfig(**kw)


def _noise(cfg: SystemConfig, snr0_db: float) -> float:
    return analytic.noise_for_snr0(cfg, analytic.db_to_linear(snr0_db))


def _sub_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1)[0])


def _guard(rows: list[Row], sweep: float, series: str, fn: Callable[[], tuple]):
    """Append fn's (value, stderr) as a row; design failures become error rows."""
    try:
        value, stderr = fn()
    except design.UnreachableTargetError as exc:
        rows.append(Row(sweep, series, None, None, f"unreachable: limit {exc.limit:.6g}"))
        return
    if value is None or (isinstance(value, float) and math.isnan(value)):
        rows.append(Row(sweep, series, None, None, "undefined"))
        return
    rows.append(Row(sweep, series, value, stderr))


# -- experiments ----------------------------------------------------------------------------


def _energy_gap(spec, base):
    rows = []
    for n_a in spec.sweep["grid"]:
        for alpha in spec.series["alphas"]:
            cfg = base.replace(alpha=alpha, n_a=int(n_a))
            phi = analytic.sigma_phi_sq(cfg)
            exact = analytic.out_of_cluster_energy(cfg) / phi
            approx = (phi - analytic.sigma_c_sq_approx(cfg)) / phi
            rows.append(Row(n_a, f"exact alpha={alpha:g}", exact))
            rows.append(Row(n_a, f"approx alpha={alpha:g}", approx))
    return rows


def _mse_vs_np(spec, base):
    rows = []
    for i, n_p in enumerate(spec.sweep["grid"]):
        for j, snr0_db in enumerate(spec.series["snr0_dbs"]):
            sw = _noise(base, snr0_db)
            for k, n_a in enumerate(spec.series["n_as"]):
                cfg = base.replace(n_a=int(n_a), n_p=int(n_p), sigma_w_sq=sw)
                tag = f"snr0={snr0_db:g}dB na={n_a}"
                rows.append(Row(n_p, f"analytic {tag}", analytic.energy_summary(cfg).sigma_e_sq))
                mc = montecarlo.run_mse_trials(cfg, spec.trials, _sub_seed(spec.seed, i, j, k))
                rows.append(Row(n_p, f"montecarlo {tag}", mc.mse, mc.mse_stderr))
                rows.append(Row(n_p, f"montecarlo-conditional {tag}", mc.mse_conditional, mc.mse_conditional_stderr))
    return rows


def _snr_vs_np(spec, base):
    rows = []
    sw_cache = {}
    for n_p in spec.sweep["grid"]:
        for alpha in spec.series["alphas"]:
            cfg = base.replace(alpha=alpha)
            if alpha not in sw_cache:
                sw_cache[alpha] = _noise(cfg, spec.fixed["snr0_db"])
            cfg = cfg.replace(sigma_w_sq=sw_cache[alpha])
            for n_a in spec.series["n_as"]:
                snr = analytic.snr(cfg.replace(n_a=int(n_a)), n_p=n_p)
                rows.append(Row(n_p, f"alpha={alpha:g} na={n_a}", analytic.linear_to_db(snr)))
            best = design.best_cluster_size(cfg, n_p=n_p, scan_cap=spec.series["best_scan"])
            best_snr = analytic.snr(cfg.replace(n_a=best), n_p=n_p)
            one = analytic.snr(cfg.replace(n_a=1), n_p=n_p)
            rows.append(Row(n_p, f"alpha={alpha:g} na=best", analytic.linear_to_db(best_snr)))
            rows.append(Row(n_p, f"alpha={alpha:g} best_na", best))
            rows.append(Row(n_p, f"alpha={alpha:g} gain_db", analytic.linear_to_db(best_snr / one)))
    return rows


def _crossover_region(spec, base):
    rows = []
    for snr0_db in spec.sweep["grid"]:
        for alpha in spec.series["alphas"]:
            cfg = base.replace(alpha=alpha)
            cfg = cfg.replace(sigma_w_sq=_noise(cfg, snr0_db))
            res = design.ncjt_crossover(cfg, np_cap=spec.series["np_cap"])
            name = f"alpha={alpha:g}"
            if res.n_p is None:
                rows.append(Row(snr0_db, name, None, None, f"no crossover: na={res.dominant} dominates"))
            else:
                rows.append(Row(snr0_db, name, res.n_p))
    return rows


def _min_pilot_length(spec, base):
    rows = []
    gamma = analytic.db_to_linear(spec.fixed["gamma_db"])
    cap = int(spec.series["np_cap"])
    for snr0_db in spec.sweep["grid"]:
        for alpha in spec.series["alphas"]:
            cfg = base.replace(alpha=alpha)
            cfg = cfg.replace(sigma_w_sq=_noise(cfg, snr0_db))
            target = gamma * design.snr_ceiling(cfg.replace(n_a=1))
            s1 = analytic.sigma_c_sq_exact(cfg.replace(n_a=1))
            tag = f"alpha={alpha:g}"
            for n_a in spec.series["n_as"]:
                c = cfg.replace(n_a=int(n_a))
                _guard(rows, snr0_db, f"numeric {tag} na={n_a}",
                       lambda: (design.np_star_numeric(c, target, cap), None))
                # gamma relative to this cluster's own perfect-CSI SNR
                g_na = gamma * s1 / analytic.sigma_c_sq_exact(c)
                if 0 < g_na < 1:
                    value, valid = design.np_star_approx(c, g_na)
                    rows.append(Row(snr0_db, f"approx {tag} na={n_a}", value))
                    rows.append(Row(snr0_db, f"valid {tag} na={n_a}", int(valid)))
                else:
                    rows.append(Row(snr0_db, f"approx {tag} na={n_a}", None, None, "gamma outside (0,1)"))
            best_np, best_na = None, None
            for n_a in range(1, spec.series["best_scan"] + 1):
                try:
                    n = design.np_star_numeric(cfg.replace(n_a=n_a), target, cap)
                except design.UnreachableTargetError:
                    continue
                if best_np is None or n < best_np:
                    best_np, best_na = n, n_a
            if best_np is None:
                rows.append(Row(snr0_db, f"numeric {tag} na=best", None, None, "unreachable for every na"))
            else:
                rows.append(Row(snr0_db, f"numeric {tag} na=best", best_np))
                rows.append(Row(snr0_db, f"best_na {tag}", best_na))
    return rows


def _optimal_cluster(spec, base):
    rows = []
    query = design.DesignQuery(scan_cap=int(spec.series["scan_cap"]))
    for alpha in spec.sweep["grid"]:
        cfg = base.replace(alpha=alpha, sigma_w_sq=0.0)
        best = design.na_star_contamination(cfg, query)
        rows.append(Row(alpha, "optimal", best.n_a, None, "cap reached" if best.cap_reached else ""))
        for g_db in spec.series["gamma_dbs"]:
            n = design.na_suboptimal(cfg, query, analytic.db_to_linear(g_db))
            rows.append(Row(alpha, f"suboptimal {g_db:g}dB", n))
    return rows


def ser_schemes(cfg: SystemConfig, gamma: float, fixed_np: int, best_scan: int) -> dict:
    """Cluster size and pilot length of the three compared schemes at one noise level."""
    one = cfg.replace(n_a=1)
    adaptive_np = design.np_star_numeric(one, gamma * design.snr_ceiling(one))
    best_na = design.best_cluster_size(cfg, n_p=adaptive_np, scan_cap=best_scan)
    return {
        "fixed": (1, int(fixed_np)),
        "adaptive": (1, adaptive_np),
        "adaptive_best_na": (best_na, adaptive_np),
    }


def _ser(spec, base):
    rows = []
    gamma = analytic.db_to_linear(spec.fixed["gamma_db"])
    for i, snr0_db in enumerate(spec.sweep["grid"]):
        cfg = base.replace(sigma_w_sq=_noise(base, snr0_db))
        schemes = ser_schemes(cfg, gamma, spec.series["fixed_np"], spec.series["best_scan"])
        for j, (name, (n_a, n_p)) in enumerate(schemes.items()):
            c = cfg.replace(n_a=n_a, n_p=n_p)
            res = montecarlo.run_ser_trials(
                c, spec.trials, _sub_seed(spec.seed, i, j), spec.series["symbols_per_trial"]
            )
            rows.append(Row(snr0_db, f"ser {name}", res.ser, res.ser_stderr))
            rows.append(Row(snr0_db, f"na {name}", n_a))
            rows.append(Row(snr0_db, f"np {name}", n_p))
    return rows


RUNNERS = {
    "energy-gap": _energy_gap,
    "mse-vs-np": _mse_vs_np,
    "snr-vs-np": _snr_vs_np,
    "crossover-region": _crossover_region,
    "min-pilot-length": _min_pilot_length,
    "optimal-cluster": _optimal_cluster,
    "ser": _ser,
}


def execute(spec: ExperimentSpec) -> CurveOutput:
    """Run an experiment; writes the curve file when spec.output_path is set."""
    spec = resolve(spec)
    rows = RUNNERS[spec.experiment](spec, base_config(spec))
    out = CurveOutput(spec, rows)
    if spec.output_path:
        out.write(spec.output_path)
    return out
