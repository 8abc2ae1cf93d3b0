"""Reproduction studies: performance ratios, sweeps, tables, reordering, NH overlays."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from qmemsim import analytic, specs
from qmemsim.errors import NoCrossingError, QmemsimError
from qmemsim.integrator import IntegratorConfig
from qmemsim.noise import NoiseModel
from qmemsim.propagate import FidelityTrace, evolve, evolve_nh, time_to_fidelity
from qmemsim.states import StateVector, reorder_descending

DEFAULT_TARGET = 0.75
PROFILE_QUBITS = {"ci": 6, "paper": 10}


def config_digest(config: IntegratorConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _map(fn, jobs, n_jobs: int = 1):
    """Run ``fn`` over ``jobs``; results come back in job order whatever the pool does."""
    jobs = list(jobs)
    if n_jobs <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, jobs))


@dataclass
class RatioReport:
    state: str
    model_a: dict
    model_b: dict
    target: float
    t_a: float
    t_b: float
    simulated: float
    predicted_first: float
    predicted_second: float | None
    moments: dict
    seed: int | None
    config_digest: str
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def run_ratio(state: StateVector, model_a: NoiseModel, model_b: NoiseModel, target: float = DEFAULT_TARGET,
              config: IntegratorConfig | None = None, seed: int | None = None) -> RatioReport:
    """Simulated ``t_a / t_b`` plus first- and second-order predictions.

    The state is zero-padded into each model's layout.  Time units follow
    the models' rates; with ``gamma = 1`` they are ``1/gamma``.
    """
    config = config or IntegratorConfig()
    psi_a = model_a.encoding.place(state) if model_a.encoding else state
    psi_b = model_b.encoding.place(state) if model_b.encoding else state
    cross_a = time_to_fidelity(model_a, psi_a, target, config)
    cross_b = time_to_fidelity(model_b, psi_b, target, config)
    pred = analytic.ratio_second_order(state, model_a, model_b, target)
    mom = analytic.moments(state)
    moments = {
        "n_d": mom.n_d[0],
        "n_b": None if mom.n_b is None else mom.n_b[0],
        "generator_a": list(pred.moments_a),
        "generator_b": list(pred.moments_b),
    }
    extra = {"crossing_a": cross_a.to_dict(), "crossing_b": cross_b.to_dict()}
    if pred.warning:
        extra["prediction_warning"] = pred.warning
    return RatioReport(
        state=state.label,
        model_a=model_a.describe(),
        model_b=model_b.describe(),
        target=target,
        t_a=cross_a.t_cross,
        t_b=cross_b.t_cross,
        simulated=cross_a.t_cross / cross_b.t_cross,
        predicted_first=pred.first_order,
        predicted_second=pred.second_order,
        moments=moments,
        seed=seed,
        config_digest=config_digest(config),
        extra=extra,
    )


def _ratio_job(job):
    spec, target, cfg, seed, gamma = job
    state = specs.parse_state(spec, seed)
    model_a, model_b = specs.default_pair(state.dim, gamma)
    report = run_ratio(state, model_a, model_b, target, IntegratorConfig.from_dict(cfg), seed)
    report.extra["spec"] = spec
    return report


def run_ratio_specs(state_specs, target=DEFAULT_TARGET, config=None, seed=0, gamma=1.0, jobs=1):
    """``run_ratio`` over state spec strings on the default qubit/qudit pair."""
    cfg = (config or IntegratorConfig()).to_dict()
    pinned = [specs.resolve_state_spec(s, seed) for s in state_specs]
    return _map(_ratio_job, [(s, target, cfg, seed, gamma) for s in pinned], jobs)


def run_ghz_sweep(n_q_list, target: float = DEFAULT_TARGET, config=None, jobs: int = 1) -> list[RatioReport]:
    """GHZ performance ratios, one per register size, each tagged with the closed form."""
    n_q_list = [int(n) for n in n_q_list]
    if any(n > 12 for n in n_q_list):
        raise ValueError("GHZ sweep is capped at n_q <= 12")
    reports = run_ratio_specs([f"ghz:{n}" for n in n_q_list], target, config, jobs=jobs)
    for n, rep in zip(n_q_list, reports):
        rep.extra["n_q"] = n
        rep.extra["closed_form"] = analytic.ghz_ratio_closed_form(n)
    return reports


@dataclass
class EnsembleSummary:
    category: str
    count: int
    simulated_mean: float
    simulated_std: float | None
    predicted_mean: float
    predicted_std: float | None
    labels: list[str] = field(default_factory=list)

    @classmethod
    def from_reports(cls, category: str, reports: list[RatioReport]) -> "EnsembleSummary":
        sim = [r.simulated for r in reports]
        pred = [r.predicted_first for r in reports]
        many = len(reports) >= 2
        return cls(
            category,
            len(reports),
            statistics.fmean(sim),
            statistics.stdev(sim) if many else None,
            statistics.fmean(pred),
            statistics.stdev(pred) if many else None,
            [r.state for r in reports],
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TableResult:
    rows: list[EnsembleSummary]
    reports: list[RatioReport]
    skipped: list[str]


def default_catalog(profile: str = "ci", states_dir=None, n_random: int = 4, seed: int = 0) -> dict:
    """Category -> list of state specs, in summary-table order.

    ``profile`` sets the register size (``ci``: 6 qubits, ``paper``: 10, the full-scale run).
    QAOA/VQE rows read ``qaoa*.json`` / ``vqe*.json`` amplitude files from
    ``states_dir``; missing files are listed under ``"skipped"``.
    """
    n = PROFILE_QUBITS[profile]
    dim = 2**n
    catalog = {
        "Coherent": [f"coherent:{dim}"],
        "GHZ": [f"ghz:{n}"],
        "W": [f"w:{n}"],
        "Equal": [f"equal:{dim}"],
        "Fock": [f"fock:{dim}:{dim // 2}"],
    }
    skipped = []
    for category, pattern in (("VQE", "vqe*.json"), ("QAOA", "qaoa*.json")):
        files = sorted(Path(states_dir).glob(pattern)) if states_dir else []
        if files:
            catalog[category] = [f"file:{p}" for p in files]
        else:
            skipped.append(category)
    catalog["Arbitrary"] = [f"arb:{dim}:{seed + i}" for i in range(n_random)]
    catalog["Unentangled"] = [f"unent:{n}:{seed + i}" for i in range(n_random)]
    catalog["skipped"] = skipped
    return catalog


def run_table(catalog: dict, target: float = DEFAULT_TARGET, config=None, jobs: int = 1) -> TableResult:
    """One :class:`EnsembleSummary` per category, in catalog order."""
    catalog = dict(catalog)
    skipped = list(catalog.pop("skipped", []))
    flat = [(cat, spec) for cat, specs_ in catalog.items() for spec in specs_]
    reports, rows = [], []
    results = _map(_table_job, [(spec, target, (config or IntegratorConfig()).to_dict()) for _, spec in flat], jobs)
    by_cat: dict[str, list[RatioReport]] = {}
    for (cat, spec), res in zip(flat, results):
        if isinstance(res, str):
            skipped.append(f"{cat}:{spec} ({res})")
            continue
        by_cat.setdefault(cat, []).append(res)
        reports.append(res)
    for cat in catalog:
        if by_cat.get(cat):
            rows.append(EnsembleSummary.from_reports(cat, by_cat[cat]))
    return TableResult(rows, reports, skipped)


def _table_job(job):
    spec, target, cfg = job
    try:
        state = specs.parse_state(spec)
    except (QmemsimError, OSError) as exc:
        return f"unreadable: {exc}"
    model_a, model_b = specs.default_pair(state.dim)
    report = run_ratio(state, model_a, model_b, target, IntegratorConfig.from_dict(cfg))
    report.extra["spec"] = spec
    return report


def write_table_csv(rows: list[EnsembleSummary], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["State", "Simulated Ratio", "Simulated Std", "Predicted Ratio", "Predicted Std", "Count"])
        for r in rows:
            writer.writerow([r.category, _fmt(r.simulated_mean), _fmt(r.simulated_std),
                             _fmt(r.predicted_mean), _fmt(r.predicted_std), r.count])


def write_jsonl(reports, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in reports:
            fh.write(r.to_json() + "\n")


def _fmt(x):
    return "" if x is None else repr(float(x))


NO_CROSSING = "no-crossing within horizon"


@dataclass
class ReorderResult:
    """``ratio = t_sorted / t_unsorted``; ``None`` with ``status == NO_CROSSING`` if the sorted state never decays."""

    state: str
    target: float
    t_unsorted: float
    t_sorted: float | None
    ratio: float | None
    status: str
    permutation_head: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def run_reorder(state: StateVector, model: NoiseModel, target: float = DEFAULT_TARGET,
                config: IntegratorConfig | None = None) -> ReorderResult:
    """Crossing time after moving the largest amplitudes to the lowest levels, relative to before."""
    state = model.encoding.place(state) if model.encoding else state
    before = time_to_fidelity(model, state, target, config)
    ordered, perm = reorder_descending(state)
    head = [int(p) for p in perm[:8]]
    try:
        after = time_to_fidelity(model, ordered, target, config)
    except NoCrossingError:
        return ReorderResult(state.label, target, before.t_cross, None, None, NO_CROSSING, head)
    return ReorderResult(state.label, target, before.t_cross, after.t_cross,
                         after.t_cross / before.t_cross, "ok", head)


def _reorder_job(job):
    spec, target, cfg, seed = job
    state = specs.parse_state(spec, seed)
    model = specs.default_pair(state.dim)[1]
    return run_reorder(state, model, target, IntegratorConfig.from_dict(cfg))


def run_reorder_specs(state_specs, target=DEFAULT_TARGET, config=None, seed=0, jobs=1) -> list[ReorderResult]:
    cfg = (config or IntegratorConfig()).to_dict()
    pinned = [specs.resolve_state_spec(s, seed) for s in state_specs]
    return _map(_reorder_job, [(s, target, cfg, seed) for s in pinned], jobs)


@dataclass
class NHComparison:
    state: str
    times: np.ndarray
    lindblad: np.ndarray
    nh: np.ndarray

    def max_abs_difference(self) -> float:
        return float(np.max(np.abs(self.lindblad - self.nh)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "lindblad", "nh"])
            for row in zip(self.times, self.lindblad, self.nh):
                writer.writerow([repr(float(x)) for x in row])


def run_nh_comparison(state: StateVector, model: NoiseModel, t_end: float, n_points: int = 101,
                      config: IntegratorConfig | None = None) -> NHComparison:
    """Full master-equation and non-Hermitian fidelities sampled on one shared time grid."""
    state = model.encoding.place(state) if model.encoding else state
    grid = np.linspace(0.0, t_end, n_points)
    full = evolve(model, state, t_end, config, t_eval=grid[1:])
    lookup = dict(zip(full.times.tolist(), full.fidelities.tolist()))
    lind = np.array([lookup[t] for t in grid.tolist()])
    nh = evolve_nh(model, state, t_end, config, t_eval=grid)
    return NHComparison(state.label, grid, lind, nh.fidelities)


def run_ftar_sweep(state_specs, targets=(0.7, 0.75, 0.9), config=None, seed=0, jobs=1) -> dict[float, list[RatioReport]]:
    """``run_ratio`` for every (state, target) pair, grouped by target."""
    cfg = (config or IntegratorConfig()).to_dict()
    pinned = [specs.resolve_state_spec(s, seed) for s in state_specs]
    flat = [(s, float(t), cfg, seed, 1.0) for t in targets for s in pinned]
    results = _map(_ratio_job, flat, jobs)
    grouped: dict[float, list[RatioReport]] = {float(t): [] for t in targets}
    for job, rep in zip(flat, results):
        grouped[job[1]].append(rep)
    return grouped


def summarize_trace(trace: FidelityTrace) -> dict:
    return {"samples": len(trace), "final_time": float(trace.times[-1]), "final_fidelity": float(trace.fidelities[-1]),
            **{k: v for k, v in trace.metadata.items() if k in ("steps", "rejected", "max_trace_error")}}


def finite_or_none(x):
    return x if x is not None and math.isfinite(x) else None
