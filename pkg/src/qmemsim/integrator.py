"""Dormand-Prince 5(4) explicit integrator with PI step-size control.

Works on any numpy array state (real or complex, any shape).  The fifth-order
solution is propagated (local extrapolation); the embedded fourth-order
solution only feeds the error estimate.  The error norm is the max over
elements of ``|err| / (atol + rtol * max(|y_old|, |y_new|))``.  A max norm
rather than RMS, because density matrices are mostly near-zero entries and
an RMS average would dilute the error of the few populated ones.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from qmemsim.errors import IntegrationError, InvalidArgumentError, StiffnessError

C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
B5 = A[6] + (0.0,)
B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
E = tuple(b5 - b4 for b5, b4 in zip(B5, B4))

# PI controller constants (Hairer, Norsett & Wanner, DOPRI5 defaults)
SAFETY = 0.9
BETA = 0.04
EXPO = 0.2 - 0.75 * BETA
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0


@dataclass(frozen=True)
class IntegratorConfig:
    """Step-control settings.

    ``first_step`` defaults to ``1e-3 / gamma_max`` and ``horizon`` (the
    longest time searched for a fidelity crossing) to ``1e3 / gamma_min``,
    both resolved against the noise model at run time.
    """

    rtol: float = 1e-8
    atol: float = 1e-10
    first_step: float | None = None
    max_step: float = math.inf
    max_steps: int = 10**7
    horizon: float | None = None

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise InvalidArgumentError("integrator tolerances must be > 0")
        if self.first_step is not None and not self.first_step > 0:
            raise InvalidArgumentError("first_step must be > 0")
        if not self.max_step > 0 or self.max_steps < 1:
            raise InvalidArgumentError("max_step and max_steps must be positive")

    def to_dict(self) -> dict:
        doc = asdict(self)
        if math.isinf(doc["max_step"]):
            doc["max_step"] = None
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "IntegratorConfig":
        doc = dict(doc)
        if doc.get("max_step") is None:
            doc.pop("max_step", None)
        return cls(**doc)


class DormandPrince:
    """Stateful adaptive stepper: ``advance`` takes one accepted step.

    ``fun(y, out)`` must write ``dy/dt`` into ``out``.  Stage derivatives live
    in one preallocated ``(7, ...)`` block so each stage combination is a
    single BLAS matrix-vector product.
    """

    def __init__(self, fun, t0: float, y0: np.ndarray, config: IntegratorConfig, first_step: float):
        self.fun = fun
        self.config = config
        self.t = float(t0)
        self.h = float(first_step)
        self.n_accepted = 0
        self.n_rejected = 0
        y0 = np.asarray(y0)
        dtype = np.result_type(y0.dtype, np.float64)
        self._k = np.empty((7,) + y0.shape, dtype=dtype)
        self._kflat = _real_view(self._k.reshape(7, -1))
        self.y = np.array(y0, dtype=dtype, copy=True)
        self._y_new = np.empty_like(self.y)
        self._stage = np.empty_like(self.y)
        self._err = np.empty_like(self.y)
        self._abs_y = np.abs(self.y)
        self._abs_new = np.empty_like(self._abs_y)
        self.fun(self.y, self._k[0])
        self._err_old = 1e-4
        self._rejected_last = False

    def _combine(self, coeffs, h, out):
        """``out = h * sum_i coeffs[i] * k[i]`` (zeros skipped by the BLAS call)."""
        n = len(coeffs)
        np.dot(h * np.asarray(coeffs), self._kflat[:n], out=_real_view(out.reshape(-1)))

    def _try_step(self, h):
        for i in range(1, 7):
            self._combine(A[i], h, self._stage)
            self._stage += self.y
            self.fun(self._stage, self._k[i])
        self._combine(B5, h, self._y_new)
        self._y_new += self.y
        self._combine(E, h, self._err)
        np.abs(self._y_new, out=self._abs_new)
        scale = np.maximum(self._abs_y, self._abs_new)
        scale *= self.config.rtol
        scale += self.config.atol
        ratio = np.abs(self._err)
        ratio /= scale
        return float(ratio.max())

    def advance(self, t_limit: float) -> None:
        """Take one accepted step, never stepping past ``t_limit``."""
        if self.n_accepted + self.n_rejected >= self.config.max_steps:
            raise IntegrationError(f"step budget of {self.config.max_steps} exhausted at t={self.t!r}")
        while True:
            h = min(self.h, self.config.max_step, t_limit - self.t)
            if h <= 16 * np.finfo(float).eps * max(abs(self.t), 1e-300):
                raise StiffnessError(f"step size underflow at t={self.t!r} (h={h!r})")
            err = self._try_step(h)
            if err <= 1.0:
                fac = err**EXPO / self._err_old**BETA if err > 0 else 0.0
                fac = min(1 / MIN_FACTOR, max(1 / MAX_FACTOR, fac / SAFETY))
                h_next = h / fac
                if self._rejected_last:
                    h_next = min(h_next, h)
                self._err_old = max(err, 1e-4)
                self._rejected_last = False
                self.t = self.t + h if h < t_limit - self.t else t_limit
                self.y, self._y_new = self._y_new, self.y
                self._abs_y, self._abs_new = self._abs_new, self._abs_y
                self._k[0] = self._k[6]
                if h == self.h or h_next < self.h:
                    self.h = h_next
                self.n_accepted += 1
                return
            self.n_rejected += 1
            self._rejected_last = True
            self.h = h / min(1 / MIN_FACTOR, err**EXPO / SAFETY)
            if self.n_accepted + self.n_rejected >= self.config.max_steps:
                raise IntegrationError(f"step budget of {self.config.max_steps} exhausted at t={self.t!r}")


def _real_view(a: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(a):
        return a.view(np.float64).reshape(a.shape[:-1] + (2 * a.shape[-1],))
    return a


def integrate(fun, y0, t0: float, t1: float, config: IntegratorConfig, first_step: float | None = None):
    """Integrate ``dy/dt = fun(y, out)`` from ``t0`` to exactly ``t1``.

    Returns ``(y1, accepted_steps, rejected_steps)``.
    """
    if t1 == t0:
        return np.array(y0, copy=True), 0, 0
    stepper = DormandPrince(fun, t0, y0, config, first_step or (t1 - t0))
    while stepper.t < t1:
        stepper.advance(t1)
    return stepper.y.copy(), stepper.n_accepted, stepper.n_rejected
