"""Pure states to be stored in a memory, and the maps that place them on hardware.

Basis index ``j`` of a state is interpreted in the radix of the target
layout: binary for a qubit register (bit 0 is qubit 0), the level number for
a single qudit, and base-``d_each`` digits for a qudit array.  Site 0 is
always the least significant digit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from qmemsim.errors import FormatError, InvalidArgumentError, ValidationError

NORM_TOL = 1e-12
FILE_RENORM_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized complex amplitude vector with a provenance label."""

    amplitudes: np.ndarray
    label: str = ""

    def __post_init__(self):
        amps = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if amps.ndim != 1:
            raise InvalidArgumentError("amplitudes must be one-dimensional")
        if amps.size < 2:
            raise InvalidArgumentError(f"state dimension must be >= 2, got {amps.size}")
        norm2 = float(np.vdot(amps, amps).real)
        if abs(norm2 - 1.0) > NORM_TOL:
            raise ValidationError(f"state is not normalized: sum |a|^2 = {norm2!r}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @classmethod
    def from_unnormalized(cls, amplitudes, label: str = "") -> "StateVector":
        amps = np.asarray(amplitudes, dtype=np.complex128)
        norm = np.linalg.norm(amps)
        if norm == 0.0:
            raise ValidationError("cannot normalize the zero vector")
        return cls(amps / norm, label)

    def __repr__(self):
        return f"StateVector(dim={self.dim}, label={self.label!r})"


@dataclass(frozen=True)
class EncodingMap:
    """Tensor layout of a memory: local dimension of every site, site 0 least significant.

    A qubit register of ``n`` qubits is ``(2,) * n``, a single qudit is
    ``(d,)`` and an array of qudits is ``(d_each,) * count``.
    """

    site_dims: tuple[int, ...]
    kind: str = field(default="custom", compare=False)

    def __post_init__(self):
        if not self.site_dims or any(int(d) < 2 for d in self.site_dims):
            raise InvalidArgumentError(f"every site needs dimension >= 2: {self.site_dims}")
        object.__setattr__(self, "site_dims", tuple(int(d) for d in self.site_dims))

    @classmethod
    def qubit_register(cls, n_q: int) -> "EncodingMap":
        return cls((2,) * _positive(n_q, "n_q"), "qubit")

    @classmethod
    def single_qudit(cls, d: int) -> "EncodingMap":
        return cls((d,), "qudit")

    @classmethod
    def qudit_array(cls, count: int, d_each: int) -> "EncodingMap":
        return cls((d_each,) * _positive(count, "count"), "array")

    @property
    def dim(self) -> int:
        return math.prod(self.site_dims)

    @property
    def strides(self) -> tuple[int, ...]:
        out, s = [], 1
        for d in self.site_dims:
            out.append(s)
            s *= d
        return tuple(out)

    def digits(self, indices=None) -> np.ndarray:
        """Per-site occupation of each basis index, shape ``(len(indices), n_sites)``."""
        j = np.arange(self.dim, dtype=np.int64) if indices is None else np.asarray(indices, dtype=np.int64)
        return np.stack([(j // s) % d for s, d in zip(self.strides, self.site_dims)], axis=-1)

    def index(self, digits) -> np.ndarray:
        digits = np.asarray(digits, dtype=np.int64)
        return digits @ np.asarray(self.strides, dtype=np.int64)

    def place(self, state: StateVector) -> StateVector:
        """Zero-pad ``state`` into this layout; index ``j`` keeps its meaning."""
        if state.dim > self.dim:
            raise InvalidArgumentError(
                f"state of dimension {state.dim} does not fit layout of dimension {self.dim}"
            )
        if state.dim == self.dim:
            return state
        amps = np.zeros(self.dim, dtype=np.complex128)
        amps[: state.dim] = state.amplitudes
        return StateVector(amps, state.label)


def _positive(n, name):
    n = int(n)
    if n < 1:
        raise InvalidArgumentError(f"{name} must be >= 1, got {n}")
    return n


def _real_state(amps, label):
    return StateVector(np.asarray(amps, dtype=np.complex128), label)


def ghz_state(n_q: int) -> StateVector:
    """(|0...0> + |1...1>)/sqrt(2) on ``n_q`` qubits."""
    n_q = _positive(n_q, "n_q")
    amps = np.zeros(2**n_q)
    amps[0] = amps[-1] = 1 / math.sqrt(2)
    return _real_state(amps, f"ghz:{n_q}")


def w_state(n_q: int) -> StateVector:
    """Equal superposition of the ``n_q`` single-excitation bit strings."""
    n_q = _positive(n_q, "n_q")
    amps = np.zeros(2**n_q)
    amps[[1 << i for i in range(n_q)]] = 1 / math.sqrt(n_q)
    return _real_state(amps, f"w:{n_q}")


def equal_superposition_state(dim: int) -> StateVector:
    if dim < 2:
        raise InvalidArgumentError(f"dim must be >= 2, got {dim}")
    return _real_state(np.full(dim, 1 / math.sqrt(dim)), f"equal:{dim}")


def fock_state(dim: int, n: int) -> StateVector:
    if dim < 2:
        raise InvalidArgumentError(f"dim must be >= 2, got {dim}")
    if not 0 <= n < dim:
        raise InvalidArgumentError(f"Fock level {n} outside [0, {dim})")
    amps = np.zeros(dim)
    amps[n] = 1.0
    return _real_state(amps, f"fock:{dim}:{n}")


def annihilation_dense(d: int) -> np.ndarray:
    """Truncated lowering operator with ``b[i, i+1] = sqrt(i+1)``."""
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), k=1)


def coherent_state(dim: int, alpha: float | None = None) -> StateVector:
    """Truncated displacement ``expm(alpha (a^dag - a)) |0>``.

    ``alpha`` defaults to ``sqrt(dim / 2)``.  The exponential of the truncated
    generator is used (not the Poissonian series), so amplitudes near the
    cutoff differ slightly from the untruncated coherent state.
    """
    if dim < 2:
        raise InvalidArgumentError(f"dim must be >= 2, got {dim}")
    if alpha is None:
        alpha = math.sqrt(dim / 2)
    a = annihilation_dense(dim)
    column = scipy.linalg.expm(float(alpha) * (a.T - a))[:, 0]
    return StateVector.from_unnormalized(column, f"coherent:{dim}:{float(alpha)!r}")


def _rng(seed: int) -> np.random.Generator:
    # Philox is counter-based, so streams are identical across platforms.
    return np.random.Generator(np.random.Philox(int(seed)))


def _uniform_complex(rng: np.random.Generator, dim: int) -> np.ndarray:
    re = rng.uniform(-0.5, 0.5, size=dim)
    im = rng.uniform(-0.5, 0.5, size=dim)
    return re + 1j * im


def random_arbitrary_state(dim: int, seed: int) -> StateVector:
    """Real and imaginary parts uniform in [-0.5, 0.5], then normalized.

    Draws come from a Philox generator keyed by ``seed``: all real parts
    first, then all imaginary parts.
    """
    if dim < 2:
        raise InvalidArgumentError(f"dim must be >= 2, got {dim}")
    return StateVector.from_unnormalized(_uniform_complex(_rng(seed), dim), f"arb:{dim}:{seed}")


def random_unentangled_state(n_q: int, seed: int) -> StateVector:
    """Tensor product of ``n_q`` independent random single-qubit states.

    Qubit 0 (least significant bit) is drawn first.  With ``n_q == 1`` this
    reproduces ``random_arbitrary_state(2, seed)`` exactly.
    """
    n_q = _positive(n_q, "n_q")
    rng = _rng(seed)
    qubits = []
    for _ in range(n_q):
        q = _uniform_complex(rng, 2)
        qubits.append(q / np.linalg.norm(q))
    amps = np.ones(1, dtype=np.complex128)
    for q in qubits:
        amps = np.kron(q, amps)
    return StateVector.from_unnormalized(amps, f"unent:{n_q}:{seed}")


def load_state_file(path) -> StateVector:
    """Read an amplitude file ``{"dim": N, "amplitudes": [[re, im], ...], "label": ...}``.

    Bare real numbers are accepted in place of ``[re, im]`` pairs.  A norm
    off by less than 1e-6 is corrected; anything larger is rejected.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        dim = int(doc["dim"])
        amps = np.array([_parse_amplitude(x) for x in doc["amplitudes"]], dtype=np.complex128)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: not a valid amplitude file ({exc})") from exc
    if amps.size != dim:
        raise FormatError(f"{path}: dim={dim} but {amps.size} amplitudes given")
    norm = float(np.linalg.norm(amps))
    if abs(norm - 1.0) >= FILE_RENORM_TOL:
        raise ValidationError(f"{path}: amplitude norm {norm!r} deviates from 1 by >= {FILE_RENORM_TOL}")
    if abs(np.vdot(amps, amps).real - 1.0) > NORM_TOL:
        amps = amps / norm
    return StateVector(amps, f"file:{path}")


def _parse_amplitude(x) -> complex:
    if isinstance(x, (int, float)):
        return complex(x)
    re, im = x
    return complex(float(re), float(im))


def save_state_file(state: StateVector, path) -> None:
    doc = {
        "dim": state.dim,
        "amplitudes": [[float(a.real), float(a.imag)] for a in state.amplitudes],
        "label": state.label,
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def reorder_descending(state: StateVector) -> tuple[StateVector, np.ndarray]:
    """Move the largest-magnitude amplitudes to the lowest basis indices.

    Phases travel with their amplitudes; equal magnitudes keep ascending
    original index.  Returns the new state and ``perm`` with
    ``new[i] == old[perm[i]]``.
    """
    perm = np.argsort(-np.abs(state.amplitudes), kind="stable")
    return StateVector(state.amplitudes[perm], f"sorted({state.label})"), perm
