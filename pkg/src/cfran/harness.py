"""Experiment driver: parameter sweeps, statistics caching and result files."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import orchestrate as orch
from .powermodel import Allocation, CapacityError, FronthaulParams, GopsParams, PowerParams, power_breakdown
from .sysmodel import SystemConfig, assign_pilots, estimate_effective_statistics, generate_scenario

log = logging.getLogger(__name__)

SCHEMES = ("end_to_end", "local", "radio_only")
RESTRICTIONS = ("cell_free", "small_cell")
BREAKDOWN_KEYS = (
    "ru_static",
    "ru_transmit",
    "ru_processing",
    "fronthaul_onu",
    "fronthaul_olt",
    "gpp_idle",
    "gpp_dynamic",
    "fixed",
)
CSV_COLUMNS = (
    "seed",
    "restriction",
    "scheme",
    "split",
    "axis",
    "axis_value",
    "feasible",
    "status",
    "total_power",
    *BREAKDOWN_KEYS,
    "sum_se",
    "se90",
    "per_ue_se",
    "iterations",
    "wall_time",
)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    L: int = 8
    K: int = 4
    W: int = 16
    seeds: list = field(default_factory=lambda: [0])
    solver: str = "ccp"
    objective: str = "power"  # "power" sweeps se_targets, "sum_se" sweeps lambdas
    se_targets: list = field(default_factory=lambda: [1.25])
    lambdas: list = field(default_factory=lambda: [5.0])
    splits: list = field(default_factory=lambda: ["8"])
    schemes: list = field(default_factory=lambda: list(SCHEMES))
    restrictions: list = field(default_factory=lambda: ["cell_free"])
    n_mc: int = 500
    permutations: int = 5
    binary_budget: int = 64
    exact_gap_tol: float = 1e-6
    exact_time_limit: float | None = 300.0
    workers: int = 1
    out: str = "results"
    formats: list = field(default_factory=lambda: ["csv", "json", "plotdata"])
    system: dict = field(default_factory=dict)
    power: dict = field(default_factory=dict)
    gops: dict = field(default_factory=dict)
    fronthaul: dict = field(default_factory=dict)
    ccp: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not self.schemes:
            raise ConfigError("at least one scheme is required")
        bad = set(self.schemes) - set(SCHEMES)
        if bad:
            raise ConfigError(f"unknown schemes {sorted(bad)}; choose from {SCHEMES}")
        bad = set(self.restrictions) - set(RESTRICTIONS)
        if bad or not self.restrictions:
            raise ConfigError(f"restrictions must be a nonempty subset of {RESTRICTIONS}")
        if self.solver not in ("exact", "ccp"):
            raise ConfigError(f"solver must be 'exact' or 'ccp', got {self.solver!r}")
        if self.objective not in ("power", "sum_se"):
            raise ConfigError(f"objective must be 'power' or 'sum_se', got {self.objective!r}")
        if self.objective == "sum_se" and "small_cell" in self.restrictions:
            raise ConfigError("the sum-SE objective is only defined for the cell-free restriction")
        if self.L < 1 or self.K < 1 or self.W < 1 or self.n_mc < 2 or self.permutations < 1:
            raise ConfigError("L, K, W, permutations must be positive and n_mc >= 2")
        if self.solver == "exact" and self.K * self.L > self.binary_budget:
            raise ConfigError(f"exact solver limited to {self.binary_budget} binaries, got K*L = {self.K * self.L}")
        if not (self.se_targets if self.objective == "power" else self.lambdas):
            raise ConfigError("the sweep axis is empty")
        try:
            self.system_config()
            self.power_params()
            GopsParams(**self.gops)
            FronthaulParams(**self.fronthaul)
            orch.CcpConfig(**self.ccp)
            for s in self.splits:
                orch.Split.parse(s)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def system_config(self):
        return SystemConfig(**self.system)

    def power_params(self):
        return PowerParams.for_antennas(self.system_config().N, **{"W": self.W, **self.power})

    @property
    def axis(self):
        return "se_target" if self.objective == "power" else "lambda"

    @property
    def axis_values(self):
        return [float(v) for v in (self.se_targets if self.objective == "power" else self.lambdas)]

    def to_dict(self):
        return dataclasses.asdict(self)


PRESETS = {
    "exact": dict(L=8, K=4, W=2, solver="exact", seeds=list(range(5)), se_targets=[0.5, 1.0, 1.25, 1.5]),
    "ccp": dict(L=16, K=8, solver="ccp", seeds=list(range(30)), se_targets=[0.5, 1.0, 1.25, 1.5, 1.75, 2.0, 2.5]),
    "ccp-large": dict(L=36, K=6, solver="ccp", seeds=list(range(10)), se_targets=[1.25]),
    "sum-se": dict(L=16, K=8, solver="ccp", objective="sum_se", seeds=list(range(10)), lambdas=[5.0, 50.0]),
}

_TOP = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"system", "power", "gops", "fronthaul", "ccp"}
_SECTIONS = {
    "system": {f.name for f in dataclasses.fields(SystemConfig)},
    "power": {f.name for f in dataclasses.fields(PowerParams)},
    "gops": {f.name for f in dataclasses.fields(GopsParams)},
    "fronthaul": {f.name for f in dataclasses.fields(FronthaulParams)},
    "ccp": {f.name for f in dataclasses.fields(orch.CcpConfig)},
}


def config_from_dict(data, base=None):
    """Build a config from nested sections; unknown keys raise :class:`ConfigError`."""
    merged = dict(base or {})
    data = dict(data or {})
    experiment = data.pop("experiment", {}) or {}
    unknown = set(experiment) - _TOP
    for name, section in data.items():
        if name not in _SECTIONS:
            unknown.add(name)
            continue
        bad = set(section or {}) - _SECTIONS[name]
        unknown |= {f"{name}.{k}" for k in bad}
        merged[name] = {**merged.get(name, {}), **(section or {})}
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    merged.update(experiment)
    try:
        return ExperimentConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, preset=None):
    base = dict(PRESETS[preset]) if preset else None
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(data, base)


def preset_config(name, **overrides):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    return ExperimentConfig(**{**PRESETS[name], **overrides})


# ----------------------------------------------------------------------------
# records
# ----------------------------------------------------------------------------


@dataclass
class ResultRecord:
    seed: int
    restriction: str
    scheme: str
    split: str
    axis: str
    axis_value: float
    feasible: bool
    status: str
    total_power: float | None = None
    breakdown: dict | None = None
    sum_se: float | None = None
    se90: float | None = None
    per_ue_se: list | None = None
    iterations: int = 0
    wall_time: float = 0.0

    def key(self):
        return (self.seed, self.axis_value, self.split, self.restriction, SCHEMES.index(self.scheme))

    def row(self):
        bd = self.breakdown or {}
        out = {
            "seed": self.seed,
            "restriction": self.restriction,
            "scheme": self.scheme,
            "split": self.split,
            "axis": self.axis,
            "axis_value": repr(float(self.axis_value)),
            "feasible": int(self.feasible),
            "status": self.status,
            "total_power": _fmt(self.total_power),
            "sum_se": _fmt(self.sum_se),
            "se90": _fmt(self.se90),
            "per_ue_se": "" if self.per_ue_se is None else ";".join(repr(float(v)) for v in self.per_ue_se),
            "iterations": self.iterations,
            "wall_time": f"{self.wall_time:.6f}",
        }
        for k in BREAKDOWN_KEYS:
            out[k] = _fmt(bd.get(k))
        return out

    @classmethod
    def from_row(cls, row):
        def num(v):
            return None if v == "" else float(v)

        bd = {k: num(row[k]) for k in BREAKDOWN_KEYS}
        return cls(
            int(row["seed"]),
            row["restriction"],
            row["scheme"],
            row["split"],
            row["axis"],
            float(row["axis_value"]),
            bool(int(row["feasible"])),
            row["status"],
            num(row["total_power"]),
            None if all(v is None for v in bd.values()) else bd,
            num(row["sum_se"]),
            num(row["se90"]),
            None if row["per_ue_se"] == "" else [float(v) for v in row["per_ue_se"].split(";")],
            int(row["iterations"]),
            float(row["wall_time"]),
        )


def _fmt(v):
    return "" if v is None else repr(float(v))


def se90(se):
    """SE reached by 90% of UEs (10th percentile)."""
    return float(np.percentile(np.asarray(se, dtype=float), 10)) if len(se) else None


# ----------------------------------------------------------------------------
# running
# ----------------------------------------------------------------------------


def _cfg_hash(cfg: SystemConfig):
    return hashlib.sha256(json.dumps(dataclasses.asdict(cfg), sort_keys=True).encode()).hexdigest()[:16]


class StatsCache:
    """Monte Carlo statistics keyed by scenario seed and configuration."""

    def __init__(self):
        self._store = {}
        self.misses = 0

    def get(self, cfg: SystemConfig, L, K, seed, n_mc):
        key = (seed, _cfg_hash(cfg), L, K, n_mc)
        if key not in self._store:
            self.misses += 1
            scenario = generate_scenario(cfg, L, K, seed=seed)
            pilots = assign_pilots(scenario, cfg.tau_p)
            self._store[key] = estimate_effective_statistics(scenario, pilots, cfg, n_mc=n_mc, seed=seed)
        return self._store[key]


def wavelength_maps(L, W_max, count, seed):
    rng = np.random.default_rng([seed, 2])
    return [orch.permuted_map(L, W_max, rng) for _ in range(count)]


def _solve(ec: ExperimentConfig, inst, restriction, value):
    if ec.objective == "sum_se":
        return orch.ccp_sum_se(inst, value, orch.CcpConfig(**ec.ccp))
    if restriction == "small_cell" or ec.solver == "exact":
        return orch.solve_exact(inst, small_cell=restriction == "small_cell", gap_tol=ec.exact_gap_tol, time_limit=ec.exact_time_limit)
    return orch.ccp_power_min(inst, orch.CcpConfig(**ec.ccp))


def _scheme_records(ec, inst, res, base, maps, elapsed):
    out = []
    if not res.feasible:
        for scheme in ec.schemes:
            out.append(ResultRecord(scheme=scheme, feasible=False, status=res.status, iterations=res.iterations, wall_time=elapsed, **base))
        return out
    se = [float(v) for v in res.se]
    common = dict(sum_se=float(np.sum(se)), se90=se90(se), per_ue_se=se, iterations=res.iterations, wall_time=elapsed, **base)
    for scheme in ec.schemes:
        if scheme == "end_to_end":
            bd = dict(res.breakdown)
        else:
            parts = []
            for wl in maps:
                counter = orch.local_coordination_counts if scheme == "local" else orch.radio_only_counts
                n_lc, n_gpp = counter(inst, res.alloc, wl)
                a = res.alloc
                parts.append(power_breakdown(Allocation(a.x, a.z, a.rho, n_lc, n_gpp), inst.pp, inst.coeffs))
            bd = {k: float(np.mean([p[k] for p in parts])) for k in BREAKDOWN_KEYS}
        out.append(ResultRecord(scheme=scheme, feasible=True, status=res.status, total_power=float(sum(bd.values())), breakdown=bd, **common))
    return out


def run_seed(ec: ExperimentConfig, seed, cache: StatsCache | None = None):
    cache = cache or StatsCache()
    cfg = ec.system_config()
    pp = ec.power_params()
    gp = GopsParams(**ec.gops)
    fh = FronthaulParams(**ec.fronthaul)
    stats = cache.get(cfg, ec.L, ec.K, seed, ec.n_mc)
    records = []
    for split in ec.splits:
        split_s = orch.Split.parse(split).value
        try:
            probe = orch.make_instance(stats, cfg, split, gamma=0.0, pp=pp, gp=gp, fh=fh)
        except orch.ConfigurationError:
            log.warning("split %s does not fit the fronthaul; all its points are infeasible", split_s)
            probe = None
        maps = wavelength_maps(ec.L, probe.W_max, ec.permutations, seed) if probe else []
        for value in ec.axis_values:
            for restriction in ec.restrictions:
                base = dict(seed=seed, restriction=restriction, split=split_s, axis=ec.axis, axis_value=value)
                t0 = time.perf_counter()
                if probe is None:
                    res = orch.OrchestrationResult(None, math.nan, None, None, orch.INFEASIBLE)
                else:
                    inst = probe.with_gamma(0.0 if ec.objective == "sum_se" else orch.se_to_sinr(value, cfg))
                    try:
                        res = _solve(ec, inst, restriction, value)
                    except (CapacityError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
                        log.warning("seed %s %s=%s %s failed: %s", seed, ec.axis, value, restriction, exc)
                        res = orch.OrchestrationResult(None, math.nan, None, None, orch.INFEASIBLE, info={"reason": str(exc)})
                records += _scheme_records(ec, probe, res, base, maps, time.perf_counter() - t0)
    return records


def _run_seed_worker(args):
    ec, seed = args
    return run_seed(ec, seed)


def run_experiment(ec: ExperimentConfig, cache: StatsCache | None = None, deterministic=False):
    """Run every (seed, axis point, restriction, scheme) combination; records come back sorted."""
    records = []
    if ec.workers > 1 and not deterministic and len(ec.seeds) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(ec.workers) as pool:
            for recs in pool.map(_run_seed_worker, [(ec, s) for s in ec.seeds]):
                records += recs
    else:
        cache = cache or StatsCache()
        for seed in ec.seeds:
            records += run_seed(ec, seed, cache)
    return sorted(records, key=ResultRecord.key)


# ----------------------------------------------------------------------------
# aggregation and output
# ----------------------------------------------------------------------------


def aggregate(records):
    """Per (restriction, scheme, split, axis value): counts and means over feasible seeds.

    Points whose feasibility ratio is at most 50% are marked ``suppressed``.
    """
    groups = {}
    for r in records:
        groups.setdefault((r.restriction, r.scheme, r.split, r.axis, r.axis_value), []).append(r)
    rows = []
    for (restriction, scheme, split, axis, x), rs in sorted(groups.items(), key=lambda kv: (kv[0][:4], kv[0][4])):
        ok = [r for r in rs if r.feasible]
        ratio = len(ok) / len(rs)
        rows.append(
            {
                "restriction": restriction,
                "scheme": scheme,
                "split": split,
                "axis": axis,
                "x": x,
                "mean_power": float(np.mean([r.total_power for r in ok])) if ok else None,
                "mean_sum_se": float(np.mean([r.sum_se for r in ok])) if ok else None,
                "count": len(rs),
                "feasible": len(ok),
                "feasibility_ratio": ratio,
                "suppressed": ratio <= 0.5,
            }
        )
    return rows


def records_to_csv(records):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def read_csv(path):
    with open(path, newline="") as fh:
        return [ResultRecord.from_row(row) for row in csv.DictReader(fh)]


def emit(records, out_dir, formats=("csv", "json", "plotdata"), config=None):
    """Write result files and return their paths."""
    if not records:
        raise ValueError("no records to emit")
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if "csv" in formats:
            p = out / "results.csv"
            p.write_text(records_to_csv(records))
            written.append(p)
        if "json" in formats:
            p = out / "results.json"
            doc = {"config": config, "records": [dataclasses.asdict(r) for r in records]}
            p.write_text(json.dumps(doc, indent=1, default=float))
            written.append(p)
        if "plotdata" in formats:
            rows = aggregate(records)
            cols = ["x", "mean_power", "mean_sum_se", "count", "feasible", "feasibility_ratio", "suppressed"]
            series = {}
            for row in rows:
                series.setdefault((row["restriction"], row["scheme"], row["split"], row["axis"]), []).append(row)
            for (restriction, scheme, split, axis), rs in series.items():
                p = out / f"plot_{axis}_{restriction}_{scheme}_split{split}.csv"
                buf = io.StringIO()
                w = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
                w.writeheader()
                for row in rs:
                    w.writerow({k: ("" if row[k] is None else row[k]) for k in cols})
                p.write_text(buf.getvalue())
                written.append(p)
    except OSError as exc:
        raise OSError(f"cannot write results under {out}: {exc}") from exc
    return written
