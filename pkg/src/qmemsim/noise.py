"""Memory architectures as Lindblad noise models.

A :class:`NoiseModel` compiles to a list of :class:`CollapseChannel` objects.
:class:`Lindbladian` evaluates ``sum_i g_i (C rho C^+ - {C^+C, rho}/2)``
without building the ``dim^2 x dim^2`` superoperator.  Lowering channels on
tensor sites become strided slice updates.  Every ``C^+C`` that is diagonal is
folded into one elementwise decay matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from qmemsim.errors import FormatError, InvalidArgumentError
from qmemsim.states import EncodingMap, StateVector

CLAMP_TOL = 1e-10


def annihilation_matrix(d: int) -> np.ndarray:
    """``d x d`` lowering operator: ``b[i, i+1] = sqrt(i+1)``, last row zero."""
    d = int(d)
    if d < 2:
        raise InvalidArgumentError(f"qudit dimension must be >= 2, got {d}")
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), k=1)


@dataclass(frozen=True, eq=False)
class OperatorSpec:
    """Symbolic collapse operator.

    ``kind`` is ``"lower"`` or ``"number"`` (acting on ``site`` of a tensor
    layout with ``site_dims``) or ``"matrix"`` (an explicit CSR matrix).
    """

    kind: str
    site_dims: tuple[int, ...] = ()
    site: int = 0
    matrix: sp.csr_matrix | None = None

    def __post_init__(self):
        if self.kind in ("lower", "number"):
            if not 0 <= self.site < len(self.site_dims):
                raise InvalidArgumentError(f"site {self.site} outside layout {self.site_dims}")
        elif self.kind == "matrix":
            m = sp.csr_matrix(self.matrix, dtype=np.complex128)
            if m.shape[0] != m.shape[1]:
                raise InvalidArgumentError(f"collapse operator must be square, got {m.shape}")
            object.__setattr__(self, "matrix", m)
        else:
            raise InvalidArgumentError(f"unknown operator kind {self.kind!r}")

    @classmethod
    def lowering(cls, site_dims, site):
        return cls("lower", tuple(site_dims), int(site))

    @classmethod
    def number(cls, site_dims, site):
        return cls("number", tuple(site_dims), int(site))

    @classmethod
    def from_matrix(cls, matrix):
        return cls("matrix", matrix=matrix)

    @property
    def dim(self) -> int:
        if self.kind == "matrix":
            return self.matrix.shape[0]
        return math.prod(self.site_dims)

    @property
    def local_dim(self) -> int:
        return self.site_dims[self.site]

    @property
    def stride(self) -> int:
        return math.prod(self.site_dims[: self.site])

    def occupation(self) -> np.ndarray:
        """Occupation of ``site`` for every basis index."""
        j = np.arange(self.dim, dtype=np.int64)
        return (j // self.stride) % self.local_dim

    def to_sparse(self) -> sp.csr_matrix:
        if self.kind == "matrix":
            return self.matrix
        d = self.local_dim
        local = annihilation_matrix(d) if self.kind == "lower" else np.diag(np.arange(d, dtype=float))
        high = self.dim // (d * self.stride)
        full = sp.kron(sp.identity(high), sp.kron(sp.csr_matrix(local), sp.identity(self.stride)))
        return sp.csr_matrix(full, dtype=np.complex128)

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def cdc_diagonal(self) -> np.ndarray | None:
        """Diagonal of ``C^+ C`` if that product is diagonal, else ``None``."""
        if self.kind == "lower":
            return self.occupation().astype(float)
        if self.kind == "number":
            return self.occupation().astype(float) ** 2
        cdc = (self.matrix.conj().T @ self.matrix).tocsr()
        diag = cdc.diagonal()
        off = (cdc - sp.diags(diag)).tocsr()
        off.eliminate_zeros()
        if off.nnz:
            return None
        return diag.real.copy()


@dataclass(frozen=True)
class CollapseChannel:
    rate: float
    operator: OperatorSpec

    def __post_init__(self):
        if not self.rate >= 0:
            raise InvalidArgumentError(f"noise rates must be >= 0, got {self.rate}")


VARIANTS = ("qubit_register", "single_qudit", "qudit_array", "custom")


@dataclass(frozen=True)
class NoiseModel:
    """A memory architecture: layout, per-site rates, and channel set.

    Use the classmethod constructors rather than building this directly.
    Structured variants place one lowering channel on every site and, when
    ``dephasing`` is set, one number-operator channel of the same rate.
    """

    variant: str
    encoding: EncodingMap | None
    rates: tuple[float, ...] = ()
    dephasing: bool = False
    channels: tuple[CollapseChannel, ...] = field(default=(), repr=False)
    custom_dim: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidArgumentError(f"unknown variant {self.variant!r}")
        if any(not r >= 0 for r in self.rates):
            raise InvalidArgumentError(f"noise rates must be >= 0, got {self.rates}")
        if self.variant != "custom" and len(self.rates) != len(self.encoding.site_dims):
            raise InvalidArgumentError("need exactly one rate per site")
        for ch in self.channels:
            if ch.operator.dim != self.dim:
                raise InvalidArgumentError(
                    f"channel dimension {ch.operator.dim} does not match model dimension {self.dim}"
                )

    @classmethod
    def qubit_register(cls, n_q: int, gamma=1.0, dephasing: bool = True) -> "NoiseModel":
        enc = EncodingMap.qubit_register(n_q)
        return cls("qubit_register", enc, _per_site(gamma, n_q), bool(dephasing))

    @classmethod
    def single_qudit(cls, d: int, gamma: float = 1.0, dephasing: bool = False) -> "NoiseModel":
        return cls("single_qudit", EncodingMap.single_qudit(d), _per_site(gamma, 1), bool(dephasing))

    @classmethod
    def qudit_array(cls, count: int, d_each: int, gamma=1.0, dephasing: bool = False) -> "NoiseModel":
        enc = EncodingMap.qudit_array(count, d_each)
        return cls("qudit_array", enc, _per_site(gamma, count), bool(dephasing))

    @classmethod
    def custom(cls, channels: Sequence[CollapseChannel], dim: int | None = None) -> "NoiseModel":
        channels = tuple(channels)
        if dim is None:
            if not channels:
                raise InvalidArgumentError("custom model without channels needs an explicit dim")
            dim = channels[0].operator.dim
        return cls("custom", None, channels=channels, custom_dim=int(dim))

    @property
    def dim(self) -> int:
        return self.custom_dim if self.variant == "custom" else self.encoding.dim

    @property
    def max_rate(self) -> float:
        rates = [c.rate for c in self.compile()]
        return max(rates, default=0.0)

    @property
    def min_positive_rate(self) -> float:
        rates = [c.rate for c in self.compile() if c.rate > 0]
        return min(rates, default=0.0)

    def compile(self) -> list[CollapseChannel]:
        return compile_model(self)

    def scaled(self, factor: float) -> "NoiseModel":
        """Same architecture with every rate multiplied by ``factor``."""
        if self.variant == "custom":
            chans = tuple(CollapseChannel(c.rate * factor, c.operator) for c in self.channels)
            return NoiseModel.custom(chans, self.dim)
        return NoiseModel(self.variant, self.encoding, tuple(r * factor for r in self.rates), self.dephasing)

    def describe(self) -> dict:
        """JSON-ready description (inverse of :meth:`from_dict`)."""
        doc = {"variant": self.variant}
        if self.variant == "qubit_register":
            doc["n_q"] = len(self.rates)
        elif self.variant == "single_qudit":
            doc["d"] = self.encoding.dim
        elif self.variant == "qudit_array":
            doc["count"] = len(self.rates)
            doc["d_each"] = self.encoding.site_dims[0]
        else:
            doc["dim"] = self.dim
            doc["channels"] = [_channel_to_dict(c) for c in self.channels]
            return doc
        rates = list(self.rates)
        doc["gamma"] = rates[0] if len(set(rates)) == 1 else rates
        doc["dephasing"] = self.dephasing
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "NoiseModel":
        try:
            variant = doc["variant"]
            gamma = doc.get("gamma", 1.0)
            dephasing = doc.get("dephasing")
            if variant == "qubit_register":
                return cls.qubit_register(doc["n_q"], gamma, True if dephasing is None else dephasing)
            if variant == "single_qudit":
                return cls.single_qudit(doc["d"], gamma, bool(dephasing))
            if variant == "qudit_array":
                return cls.qudit_array(doc["count"], doc["d_each"], gamma, bool(dephasing))
            if variant == "custom":
                chans = [_channel_from_dict(c) for c in doc["channels"]]
                return cls.custom(chans, doc.get("dim"))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidArgumentError):
                raise
            raise FormatError(f"bad noise model description: {exc}") from exc
        raise FormatError(f"unknown noise model variant {variant!r}")


def _per_site(gamma, n) -> tuple[float, ...]:
    if np.ndim(gamma) == 0:
        return (float(gamma),) * n
    rates = tuple(float(g) for g in gamma)
    if len(rates) != n:
        raise InvalidArgumentError(f"expected {n} per-site rates, got {len(rates)}")
    return rates


def _channel_to_dict(ch: CollapseChannel) -> dict:
    m = ch.operator.to_sparse().tocoo()
    entries = [[int(r), int(c), float(v.real), float(v.imag)] for r, c, v in zip(m.row, m.col, m.data)]
    return {"rate": ch.rate, "dim": m.shape[0], "entries": entries}


def _channel_from_dict(doc: dict) -> CollapseChannel:
    dim = int(doc["dim"])
    rows, cols, vals = [], [], []
    for r, c, re, *im in doc["entries"]:
        rows.append(int(r))
        cols.append(int(c))
        vals.append(complex(float(re), float(im[0]) if im else 0.0))
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim), dtype=np.complex128)
    return CollapseChannel(float(doc["rate"]), OperatorSpec.from_matrix(mat))


def compile_model(model: NoiseModel) -> list[CollapseChannel]:
    """Expand a model into its collapse channels.

    Qubit registers with dephasing give ``2 n_q`` channels (lowering then
    number operator, qubit by qubit).  Qudit variants give one lowering
    channel per qudit.
    """
    if model.variant == "custom":
        return list(model.channels)
    dims = model.encoding.site_dims
    out = []
    for site, rate in enumerate(model.rates):
        out.append(CollapseChannel(rate, OperatorSpec.lowering(dims, site)))
        if model.dephasing:
            out.append(CollapseChannel(rate, OperatorSpec.number(dims, site)))
    return out


def _as_channels(source) -> list[CollapseChannel]:
    return source.compile() if isinstance(source, NoiseModel) else list(source)


def generator_diagonal(source) -> np.ndarray | None:
    """Diagonal of ``G = sum_i (g_i/2) C_i^+ C_i``, or ``None`` if ``G`` is not diagonal.

    ``G`` drives the non-Hermitian decay ``d psi/dt = -G psi``.
    """
    channels = _as_channels(source)
    if not channels:
        return None
    g = np.zeros(channels[0].operator.dim)
    for ch in channels:
        diag = ch.operator.cdc_diagonal()
        if diag is None:
            return None
        g += 0.5 * ch.rate * diag
    return g


def generator_sparse(source, dim: int | None = None) -> sp.csr_matrix:
    channels = _as_channels(source)
    if dim is None:
        dim = source.dim if isinstance(source, NoiseModel) else channels[0].operator.dim
    g = sp.csr_matrix((dim, dim), dtype=np.complex128)
    for ch in channels:
        c = ch.operator.to_sparse()
        g = g + 0.5 * ch.rate * (c.conj().T @ c)
    return g.tocsr()


class Lindbladian:
    """Matrix-free action of the dissipator built from a channel list.

    The object is immutable after construction and can be shared between
    propagations.
    """

    def __init__(self, source, dim: int | None = None):
        channels = _as_channels(source)
        if dim is None:
            if isinstance(source, NoiseModel):
                dim = source.dim
            elif channels:
                dim = channels[0].operator.dim
            else:
                raise InvalidArgumentError("cannot infer dimension from an empty channel list")
        self.dim = int(dim)
        self.channels = tuple(channels)
        for ch in channels:
            if ch.operator.dim != self.dim:
                raise InvalidArgumentError(
                    f"channel dimension {ch.operator.dim} does not match {self.dim}"
                )

        # decay[j, k] collects every elementwise term: -(u_j + u_k)/2 + sum g n_j n_k
        u = np.zeros(self.dim)
        decay = np.zeros((self.dim, self.dim))
        self._shifts = []
        self._sparse = []
        for ch in channels:
            if ch.rate == 0:
                continue
            op = ch.operator
            if op.kind == "lower":
                d, stride = op.local_dim, op.stride
                w = np.sqrt(np.arange(1, d, dtype=float))
                coef = ch.rate * w.reshape(1, d - 1, 1, 1, 1, 1) * w.reshape(1, 1, 1, 1, d - 1, 1)
                shape = (self.dim // (d * stride), d, stride) * 2
                self._shifts.append((shape, coef))
                u += ch.rate * op.occupation()
            elif op.kind == "number":
                n = op.occupation().astype(float)
                u += ch.rate * n**2
                decay += ch.rate * np.outer(n, n)
            else:
                c = op.matrix
                cdc_diag = op.cdc_diagonal()
                if cdc_diag is not None:
                    u += ch.rate * cdc_diag
                    self._sparse.append((ch.rate, c, c.conj().T.tocsr(), None))
                else:
                    cdc = (c.conj().T @ c).tocsr()
                    self._sparse.append((ch.rate, c, c.conj().T.tocsr(), cdc))
        decay -= 0.5 * (u[:, None] + u[None, :])
        self._decay = decay
        self._decay_is_zero = not np.any(decay)

    def __call__(self, rho: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        rho = np.asarray(rho)
        if rho.shape != (self.dim, self.dim):
            raise InvalidArgumentError(f"density matrix shape {rho.shape} does not match dim {self.dim}")
        if out is None:
            out = np.empty(rho.shape, dtype=np.result_type(rho.dtype, np.complex128))
        np.multiply(self._decay, rho, out=out)
        for shape, coef in self._shifts:
            if coef.size == 1:
                # two-level site: integer indexing drops the singleton axes
                src = rho.reshape(shape)[:, 1, :, :, 1, :]
                dst = out.reshape(shape)[:, 0, :, :, 0, :]
                c = coef.flat[0]
                dst += src if c == 1.0 else c * src
            else:
                dst = out.reshape(shape)[:, :-1, :, :, :-1, :]
                dst += coef * rho.reshape(shape)[:, 1:, :, :, 1:, :]
        for rate, c, cd, cdc in self._sparse:
            out += rate * np.asarray((c @ rho) @ cd)
            if cdc is not None:
                out -= 0.5 * rate * np.asarray(cdc @ rho + rho @ cdc)
        return out


def apply_lindbladian(channels, rho: np.ndarray) -> np.ndarray:
    """``sum_i g_i L(C_i)[rho]`` for a channel list or a :class:`NoiseModel`."""
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidArgumentError(f"density matrix must be square, got {rho.shape}")
    return Lindbladian(channels, rho.shape[0])(rho)


def pure_density_matrix(state: StateVector) -> np.ndarray:
    return np.outer(state.amplitudes, state.amplitudes.conj())


def fidelity_against_pure(target: StateVector, rho: np.ndarray) -> float:
    """``<psi|rho|psi>`` for a pure target ``psi``.

    Values within 1e-10 outside [0, 1] are clamped; larger excursions are
    returned unchanged so integration drift stays visible.
    """
    psi = target.amplitudes
    if rho.shape != (psi.size, psi.size):
        raise InvalidArgumentError(f"density matrix shape {rho.shape} does not match state dim {psi.size}")
    f = float(np.vdot(psi, rho @ psi).real)
    if -CLAMP_TOL <= f < 0.0:
        return 0.0
    if 1.0 < f <= 1.0 + CLAMP_TOL:
        return 1.0
    return f


def restrict_to_support(model: NoiseModel, state: StateVector) -> tuple[NoiseModel, StateVector]:
    """Drop levels the dynamics can never reach from ``state``.

    Lowering and number channels never raise any site's occupation, so each
    site can be cut to ``1 + (largest occupation present in state)`` and
    sites that are always empty can be removed.  The reduction is exact.
    Custom models are returned unchanged.
    """
    if model.variant == "custom" or state.dim != model.dim:
        return model, state
    enc = model.encoding
    support = np.flatnonzero(state.amplitudes)
    digits = enc.digits(support)
    top = digits.max(axis=0) + 1
    keep = [i for i, d in enumerate(top) if d > 1] or [0]
    new_dims = tuple(max(2, int(top[i])) for i in keep)
    if new_dims == enc.site_dims:
        return model, state
    new_enc = EncodingMap(new_dims, enc.kind)
    amps = np.zeros(new_enc.dim, dtype=np.complex128)
    amps[new_enc.index(digits[:, keep])] = state.amplitudes[support]
    rates = tuple(model.rates[i] for i in keep)
    reduced = NoiseModel(model.variant, new_enc, rates, model.dephasing)
    return reduced, StateVector(amps, state.label)
