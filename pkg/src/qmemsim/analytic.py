"""Closed-form and series predictions from the non-Hermitian picture.

Under ``d psi/dt = -G psi`` with ``G = sum_i (g_i/2) C_i^+ C_i`` the overlap
``sqrt(F(t)) = |<psi0| exp(-G t) |psi0>|``.  Expanding in ``t`` gives the
moments ``<G^k>``, and truncating at first order gives a crossing time
``~ (1 - sqrt(F_t)) / <G>`` for any target.  The predicted performance ratio
of two memories is therefore ``<G_b> / <G_a>``.  For the default qubit model
(damping plus dephasing) ``G = gamma n_b``.  For a single damped qudit
``G = gamma n_d / 2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.optimize
import scipy.sparse.linalg

from qmemsim.errors import InvalidArgumentError, SolverError, UndefinedRatioError, UnsupportedError
from qmemsim.noise import NoiseModel, generator_diagonal, generator_sparse, _as_channels
from qmemsim.states import EncodingMap, StateVector

DENSE_EXPM_LIMIT = 4096


def hamming_weight(j: int) -> int:
    j = int(j)
    if j < 0:
        raise InvalidArgumentError(f"hamming weight needs j >= 0, got {j}")
    return j.bit_count()


def hamming_weights(indices) -> np.ndarray:
    return np.bitwise_count(np.asarray(indices, dtype=np.uint64)).astype(np.int64)


def _fsum(values) -> float:
    return math.fsum(np.asarray(values, dtype=float).ravel())


def _require_power_of_two(state: StateVector):
    if state.dim & (state.dim - 1):
        raise InvalidArgumentError(f"qubit encoding needs a power-of-two dimension, got {state.dim}")


def nh_fidelity_qubit(state: StateVector, gamma: float, t: float) -> float:
    """Qubit register with damping and dephasing: ``sqrt(F) = sum_j |a_j|^2 exp(-gamma w(j) t)``."""
    _require_power_of_two(state)
    w = hamming_weights(np.arange(state.dim))
    return _fsum(state.probabilities * np.exp(-gamma * w * t)) ** 2


def nh_fidelity_qudit(state: StateVector, gamma: float, t: float) -> float:
    """Damped single qudit: ``sqrt(F) = sum_j |a_j|^2 exp(-gamma j t / 2)``."""
    j = np.arange(state.dim, dtype=float)
    return _fsum(state.probabilities * np.exp(-0.5 * gamma * j * t)) ** 2


def nh_fidelity_general(channels, state: StateVector, t: float) -> float:
    """``|<psi| exp(-t sum_i (g_i/2) C_i^+ C_i) |psi>|^2`` for any channel list or model.

    Diagonal generators are evaluated elementwise.  Otherwise a direct
    exponential action is used, limited to ``dim <= 4096``.
    """
    chans = _as_channels(channels)
    if not chans:
        return 1.0
    if chans[0].operator.dim != state.dim:
        raise InvalidArgumentError(f"channel dimension {chans[0].operator.dim} != state dimension {state.dim}")
    g = generator_diagonal(chans)
    if g is not None:
        return _fsum(state.probabilities * np.exp(-g * t)) ** 2
    if state.dim > DENSE_EXPM_LIMIT:
        raise UnsupportedError(f"non-diagonal generator at dim {state.dim} > {DENSE_EXPM_LIMIT}")
    gen = generator_sparse(chans, state.dim)
    evolved = scipy.sparse.linalg.expm_multiply(-t * gen, state.amplitudes)
    return abs(np.vdot(state.amplitudes, evolved)) ** 2


@dataclass(frozen=True)
class MomentSet:
    """Moments ``<x^k>``, ``k = 1..k_max``, stored as tuples indexed ``k - 1``.

    ``n_d`` uses the level number ``j``; ``n_b`` its Hamming weight (``None``
    unless the dimension is a power of two); ``n_int`` the digit sum in the
    radix of a qudit array layout.  ``per_channel`` and ``generator`` are
    filled when a noise model is supplied.
    """

    k_max: int
    n_d: tuple[float, ...]
    n_b: tuple[float, ...] | None = None
    n_int: tuple[float, ...] | None = None
    radix: int | None = None
    per_channel: tuple[tuple[float, ...], ...] | None = None
    generator: tuple[float, ...] | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _power_moments(p, x, k_max):
    x = np.asarray(x, dtype=float)
    return tuple(_fsum(p * x**k) for k in range(1, k_max + 1))


def _operator_moments(state, op, k_max):
    out, v = [], state.amplitudes
    for _ in range(k_max):
        v = op @ v
        out.append(abs(np.vdot(state.amplitudes, v)))
    return tuple(out)


def generator_moments(state: StateVector, model: NoiseModel, k_max: int = 2) -> tuple[float, ...]:
    """``<G^k>`` for ``G = sum_i (g_i/2) C_i^+ C_i`` of ``model``."""
    state = _placed(state, model)
    g = generator_diagonal(model)
    if g is not None:
        return _power_moments(state.probabilities, g, k_max)
    return _operator_moments(state, generator_sparse(model), k_max)


def _placed(state, model):
    if model.variant == "custom":
        if state.dim != model.dim:
            raise InvalidArgumentError(f"state dimension {state.dim} != model dimension {model.dim}")
        return state
    return model.encoding.place(state)


def moments(state: StateVector, layout=None, k_max: int = 2) -> MomentSet:
    """Excitation-number moments of ``state``.

    ``layout`` may be ``None``, an :class:`EncodingMap`, or a
    :class:`NoiseModel`.  A qudit-array layout fills ``n_int``.  A model
    also fills the per-channel moments ``|<(C^+C)^k>|`` and ``<G^k>``.
    """
    if k_max < 1:
        raise InvalidArgumentError("k_max must be >= 1")
    model = layout if isinstance(layout, NoiseModel) else None
    enc = model.encoding if model is not None else layout
    if enc is not None:
        state = enc.place(state)
    elif model is not None and state.dim != model.dim:
        raise InvalidArgumentError(f"state dimension {state.dim} != model dimension {model.dim}")
    p = state.probabilities
    j = np.arange(state.dim)
    n_d = _power_moments(p, j, k_max)
    n_b = None if state.dim & (state.dim - 1) else _power_moments(p, hamming_weights(j), k_max)
    n_int = radix = None
    if isinstance(enc, EncodingMap) and enc.kind == "array":
        radix = enc.site_dims[0]
        n_int = _power_moments(p, enc.digits().sum(axis=1), k_max)
    per_channel = generator = None
    if model is not None:
        per_channel = []
        for ch in model.compile():
            diag = ch.operator.cdc_diagonal()
            if diag is not None:
                per_channel.append(_power_moments(p, diag, k_max))
            else:
                c = ch.operator.to_sparse()
                per_channel.append(_operator_moments(state, (c.conj().T @ c).tocsr(), k_max))
        per_channel = tuple(per_channel)
        generator = generator_moments(state, model, k_max)
    return MomentSet(k_max, n_d, n_b, n_int, radix, per_channel, generator)


@dataclass(frozen=True)
class RatioPrediction:
    """Predicted ``t_a / t_b`` for storing one state in memories ``a`` and ``b``."""

    first_order: float
    second_order: float | None = None
    target: float | None = None
    moments_a: tuple[float, ...] = ()
    moments_b: tuple[float, ...] = ()
    warning: str | None = field(default=None, compare=False)

    def to_dict(self) -> dict:
        return {
            "first_order": self.first_order,
            "second_order": self.second_order,
            "target": self.target,
            "moments_a": list(self.moments_a),
            "moments_b": list(self.moments_b),
            "warning": self.warning,
        }


def _check_decays(m1, which):
    if m1 <= 0:
        raise UndefinedRatioError(f"state does not decay in memory {which} (<G> = 0); ratio undefined")


def ratio_first_order(state: StateVector, model_a: NoiseModel, model_b: NoiseModel) -> RatioPrediction:
    """``t_a / t_b ~ <G_b> / <G_a>``, independent of the target fidelity.

    For a damped+dephased qubit register ``a`` and a damped qudit ``b`` this
    is ``<n_d> / (2 <n_b>)``.  Without dephasing on the qubit side the
    factor 2 disappears.
    """
    ma = generator_moments(state, model_a, 2)
    mb = generator_moments(state, model_b, 2)
    _check_decays(ma[0], "a")
    return RatioPrediction(mb[0] / ma[0], moments_a=ma, moments_b=mb)


def second_order_time(m1: float, m2: float, target: float) -> tuple[float, str | None]:
    """Smallest positive root of ``1 - m1 t + m2 t^2 / 2 = sqrt(target)``.

    When the quadratic bottoms out above ``sqrt(target)`` there is no root;
    the time of closest approach is returned together with a warning text.
    """
    if not 0 < target < 1:
        raise InvalidArgumentError(f"target fidelity must be in (0, 1), got {target}")
    _check_decays(m1, "(second order)")
    s = math.sqrt(target)
    t1 = (1.0 - s) / m1
    hi = 10.0 * t1
    if m2 > 0:
        hi = min(hi, m1 / m2)

    def residual(t):
        return 1.0 - m1 * t + 0.5 * m2 * t * t - s

    if residual(hi) > 0:
        if m2 > 0 and m1 / m2 <= 10.0 * t1:
            return m1 / m2, (f"second-order truncation never reaches sqrt(F_t)={s:.6g}; "
                             "reporting the time of closest approach")
        raise SolverError(f"no second-order root in [0, {hi!r}]")
    root = scipy.optimize.brentq(residual, 0.0, hi, xtol=1e-15 * t1, rtol=1e-12)
    return root, None


def ratio_second_order(state: StateVector, model_a: NoiseModel, model_b: NoiseModel,
                       target: float) -> RatioPrediction:
    """Solve each memory's second-order truncated fidelity for its own crossing time."""
    first = ratio_first_order(state, model_a, model_b)
    _check_decays(first.moments_b[0], "b")
    ta, warn_a = second_order_time(*first.moments_a, target)
    tb, warn_b = second_order_time(*first.moments_b, target)
    warning = "; ".join(w for w in (warn_a, warn_b) if w) or None
    if warning:
        warnings.warn(warning, RuntimeWarning, stacklevel=2)
    return RatioPrediction(first.first_order, ta / tb, target, first.moments_a, first.moments_b, warning)


def ghz_ratio_closed_form(n_q: int) -> float:
    """``(2^n_q - 1) / (2 n_q)``: GHZ state, damped+dephased qubits vs one damped qudit."""
    if n_q < 1:
        raise InvalidArgumentError(f"n_q must be >= 1, got {n_q}")
    return (2**n_q - 1) / (2 * n_q)


def ratio_disordered(state: StateVector, per_qubit_rates, uniform_rate: float) -> float:
    """First-order ``t_uniform / t_disordered = sum_j g_j <n_j> / (g <n_b>)``.

    ``<n_j>`` is the excitation probability of qubit ``j``.
    """
    rates = np.asarray(per_qubit_rates, dtype=float)
    if np.any(rates < 0) or uniform_rate < 0:
        raise InvalidArgumentError("noise rates must be >= 0")
    _require_power_of_two(state)
    n_q = state.dim.bit_length() - 1
    if rates.shape != (n_q,):
        raise InvalidArgumentError(f"expected {n_q} per-qubit rates, got {rates.shape}")
    bits = EncodingMap.qubit_register(n_q).digits()
    n_j = np.array([_fsum(state.probabilities * bits[:, i]) for i in range(n_q)])
    n_b = _fsum(n_j)
    if n_b == 0 or uniform_rate == 0:
        raise UndefinedRatioError("vacuum state (or zero reference rate): ratio undefined")
    return _fsum(rates * n_j) / (uniform_rate * n_b)
