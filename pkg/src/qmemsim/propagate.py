"""Time evolution of stored states and fidelity-crossing times."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from qmemsim.errors import IntegrationError, InvalidArgumentError, NoCrossingError
from qmemsim.integrator import DormandPrince, IntegratorConfig, integrate
from qmemsim.noise import (
    Lindbladian,
    NoiseModel,
    fidelity_against_pure,
    generator_diagonal,
    generator_sparse,
    pure_density_matrix,
    restrict_to_support,
)
from qmemsim.states import StateVector

CROSSING_TOL = 1e-9
MAX_BISECTIONS = 200
NH_DEFAULT_POINTS = 257


@dataclass
class FidelityTrace:
    times: np.ndarray
    fidelities: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "fidelity"])
            for t, f in zip(self.times, self.fidelities):
                writer.writerow([repr(float(t)), repr(float(f))])

    def write_metadata(self, path) -> None:
        Path(path).write_text(json.dumps(self.metadata, indent=2, sort_keys=True), encoding="utf-8")

    @classmethod
    def from_csv(cls, path) -> "FidelityTrace":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1])


@dataclass(frozen=True)
class CrossingResult:
    t_cross: float
    fidelity: float
    target: float
    bracket: tuple[float, float]
    steps: int
    rejected: int
    bisections: int
    nonmonotone: bool = False

    def to_dict(self) -> dict:
        return {
            "t_cross": self.t_cross,
            "fidelity": self.fidelity,
            "target": self.target,
            "bracket": list(self.bracket),
            "steps": self.steps,
            "rejected": self.rejected,
            "bisections": self.bisections,
            "nonmonotone": self.nonmonotone,
        }


def _check_inputs(model: NoiseModel, psi0: StateVector):
    if psi0.dim != model.dim:
        raise InvalidArgumentError(f"state dimension {psi0.dim} does not match model dimension {model.dim}")


def _first_step(model: NoiseModel, config: IntegratorConfig, span: float) -> float:
    if config.first_step is not None:
        return min(config.first_step, span)
    gmax = model.max_rate
    return min(1e-3 / gmax, span) if gmax > 0 else span


def _horizon(model: NoiseModel, config: IntegratorConfig) -> float:
    if config.horizon is not None:
        return config.horizon
    gmin = model.min_positive_rate
    return 1e3 / gmin if gmin > 0 else 1e3


def _base_metadata(kind, model, psi0, config):
    return {
        "kind": kind,
        "state": psi0.label,
        "dim": psi0.dim,
        "model": model.describe() if model.variant != "custom" else {"variant": "custom", "dim": model.dim},
        "config": config.to_dict(),
    }


def _stop_times(t_end, t_eval):
    if t_eval is None:
        return [t_end]
    stops = sorted(float(t) for t in t_eval if 0 < t <= t_end)
    if not stops or stops[-1] < t_end:
        stops.append(t_end)
    return stops


def evolve(model: NoiseModel, psi0: StateVector, t_end: float, config: IntegratorConfig | None = None,
           t_eval=None, reduce: bool = True) -> FidelityTrace:
    """Integrate the master equation from ``|psi0><psi0|`` and record ``<psi0|rho(t)|psi0>``.

    A sample is recorded after every accepted step.  When ``t_eval`` is
    given, steps are also clipped so those times are hit exactly.  The trace
    metadata carries step counts and the worst trace deviation seen.  With
    ``reduce`` the model is first cut to the levels reachable from ``psi0``
    (exact, see :func:`restrict_to_support`).
    """
    config = config or IntegratorConfig()
    _check_inputs(model, psi0)
    if not t_end > 0:
        raise InvalidArgumentError(f"t_end must be > 0, got {t_end}")
    full_dim = model.dim
    if reduce:
        model, psi0 = restrict_to_support(model, psi0)
    lind = Lindbladian(model)
    stepper = DormandPrince(lind, 0.0, pure_density_matrix(psi0), config, _first_step(model, config, t_end))
    times, fids = [0.0], [fidelity_against_pure(psi0, stepper.y)]
    max_trace_err = 0.0
    meta = _base_metadata("lindblad", model, psi0, config)
    meta.update(dim=full_dim, simulated_dim=model.dim)

    def partial():
        meta.update(steps=stepper.n_accepted, rejected=stepper.n_rejected, max_trace_error=max_trace_err,
                    completed=False)
        return FidelityTrace(np.array(times), np.array(fids), dict(meta))

    try:
        for stop in _stop_times(t_end, t_eval):
            while stepper.t < stop:
                stepper.advance(stop)
                times.append(stepper.t)
                fids.append(fidelity_against_pure(psi0, stepper.y))
                max_trace_err = max(max_trace_err, abs(np.trace(stepper.y).real - 1.0))
    except IntegrationError as exc:
        exc.partial = partial()
        raise
    trace = partial()
    trace.metadata["completed"] = True
    return trace


def time_to_fidelity(model: NoiseModel, psi0: StateVector, target: float,
                     config: IntegratorConfig | None = None, reduce: bool = True) -> CrossingResult:
    """First time at which ``<psi0|rho(t)|psi0>`` drops to ``target``.

    Integrates until the fidelity is below ``target``, then bisects the
    bracketing step, re-integrating from the last point above the target
    each time, until ``|F - target| < 1e-9``.  Fidelity is assumed to decay
    monotonically; if a rise was observed before the crossing, the result's
    ``nonmonotone`` flag is set and a warning is emitted.
    """
    config = config or IntegratorConfig()
    _check_inputs(model, psi0)
    if not 0 < target < 1:
        raise InvalidArgumentError(f"target fidelity must be in (0, 1), got {target}")
    horizon = _horizon(model, config)
    if reduce:
        model, psi0 = restrict_to_support(model, psi0)
    lind = Lindbladian(model)
    stepper = DormandPrince(lind, 0.0, pure_density_matrix(psi0), config, _first_step(model, config, horizon))
    t_lo, rho_lo, f_lo = 0.0, stepper.y.copy(), 1.0
    nonmonotone = False
    while True:
        if stepper.t >= horizon:
            raise NoCrossingError(
                f"fidelity stayed above {target} up to the horizon t={horizon!r}",
                horizon=horizon, final_fidelity=f_lo,
            )
        stepper.advance(horizon)
        f = fidelity_against_pure(psi0, stepper.y)
        if f < target:
            break
        if f > f_lo + 1e-12:
            nonmonotone = True
        t_lo, f_lo = stepper.t, f
        np.copyto(rho_lo, stepper.y)
    t_hi, f_hi = stepper.t, f
    steps, rejected = stepper.n_accepted, stepper.n_rejected

    best_t, best_f = (t_hi, f_hi) if abs(f_hi - target) < abs(f_lo - target) else (t_lo, f_lo)
    n_bisect = 0
    while abs(best_f - target) >= CROSSING_TOL and n_bisect < MAX_BISECTIONS:
        t_mid = 0.5 * (t_lo + t_hi)
        if not t_lo < t_mid < t_hi:
            break
        rho_mid, acc, rej = integrate(lind, rho_lo, t_lo, t_mid, config)
        steps += acc
        rejected += rej
        n_bisect += 1
        f_mid = fidelity_against_pure(psi0, rho_mid)
        if abs(f_mid - target) < abs(best_f - target):
            best_t, best_f = t_mid, f_mid
        if f_mid >= target:
            t_lo, rho_lo = t_mid, rho_mid
        else:
            t_hi = t_mid
    if nonmonotone:
        warnings.warn(f"fidelity of {psi0.label} rose before crossing {target}; reporting first crossing",
                      RuntimeWarning, stacklevel=2)
    return CrossingResult(best_t, best_f, target, (t_lo, t_hi), steps, rejected, n_bisect, nonmonotone)


def evolve_nh(model: NoiseModel, psi0: StateVector, t_end: float, config: IntegratorConfig | None = None,
              t_eval=None) -> FidelityTrace:
    """Norm-losing evolution ``d psi/dt = -sum_i (g_i/2) C_i^+ C_i psi``, fidelity ``|<psi0|psi(t)>|^2``.

    Diagonal generators (every structured model) are solved in closed form
    on ``t_eval`` (default: 257 evenly spaced points).  Other generators go
    through the adaptive Runge-Kutta stepper.
    """
    config = config or IntegratorConfig()
    _check_inputs(model, psi0)
    if not t_end > 0:
        raise InvalidArgumentError(f"t_end must be > 0, got {t_end}")
    meta = _base_metadata("non-hermitian", model, psi0, config)
    g = generator_diagonal(model)
    if g is not None:
        times = np.linspace(0.0, t_end, NH_DEFAULT_POINTS) if t_eval is None else np.asarray(t_eval, float)
        amp = nh_amplitude_diagonal(psi0.probabilities, g, times)
        meta.update(method="closed-form", steps=0, rejected=0, completed=True)
        return FidelityTrace(times, np.abs(amp) ** 2, meta)

    gen = generator_sparse(model)
    psi_start = psi0.amplitudes.copy()
    def rhs(v, out):
        out[:] = gen @ v
        np.negative(out, out=out)

    stepper = DormandPrince(rhs, 0.0, psi_start, config, _first_step(model, config, t_end))
    times, fids = [0.0], [1.0]
    for stop in _stop_times(t_end, t_eval):
        while stepper.t < stop:
            stepper.advance(stop)
            times.append(stepper.t)
            fids.append(abs(np.vdot(psi0.amplitudes, stepper.y)) ** 2)
    meta.update(method="runge-kutta", steps=stepper.n_accepted, rejected=stepper.n_rejected, completed=True)
    return FidelityTrace(np.array(times), np.array(fids), meta)


def nh_amplitude_diagonal(probabilities: np.ndarray, g: np.ndarray, times) -> np.ndarray:
    """``sum_j p_j exp(-g_j t)`` for each ``t`` in ``times`` (the NH overlap, i.e. ``sqrt(F)``)."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    return np.array([math.fsum(probabilities * np.exp(-g * t)) for t in times])
