"""Compact ``name:params`` strings for states and memory models.

States::

    ghz:N  w:N  equal:D  fock:D:N  coherent:D[:ALPHA]
    arb:D[:SEED]  unent:N[:SEED]  file:PATH

Models::

    qubit:N      damped + dephased qubit register
    qubit-ad:N   damped qubit register without dephasing
    qudit:D      single damped qudit
    array:COUNT:D_EACH
    file:PATH    JSON noise-model description

Random states take ``SEED`` from the spec, falling back to the caller's
default seed.  All other states ignore the seed.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

from qmemsim import states as st
from qmemsim.errors import FormatError
from qmemsim.noise import NoiseModel

RANDOM_KINDS = ("arb", "unent")


def _ints(parts, spec, n_min, n_max=None):
    n_max = n_min if n_max is None else n_max
    if not n_min <= len(parts) <= n_max:
        raise FormatError(f"wrong number of parameters in {spec!r}")
    try:
        return [int(p) for p in parts]
    except ValueError as exc:
        raise FormatError(f"non-integer parameter in {spec!r}") from exc


def parse_state(spec: str, seed: int = 0) -> st.StateVector:
    kind, _, rest = spec.partition(":")
    if kind == "file":
        if not rest:
            raise FormatError("file: state spec needs a path")
        return st.load_state_file(rest)
    parts = rest.split(":") if rest else []
    if kind == "ghz":
        return st.ghz_state(*_ints(parts, spec, 1))
    if kind == "w":
        return st.w_state(*_ints(parts, spec, 1))
    if kind == "equal":
        return st.equal_superposition_state(*_ints(parts, spec, 1))
    if kind == "fock":
        return st.fock_state(*_ints(parts, spec, 2))
    if kind == "coherent":
        if len(parts) not in (1, 2):
            raise FormatError(f"wrong number of parameters in {spec!r}")
        dim = _ints(parts[:1], spec, 1)[0]
        try:
            alpha = float(parts[1]) if len(parts) == 2 else None
        except ValueError as exc:
            raise FormatError(f"bad alpha in {spec!r}") from exc
        return st.coherent_state(dim, alpha)
    if kind in RANDOM_KINDS:
        vals = _ints(parts, spec, 1, 2)
        s = vals[1] if len(vals) == 2 else seed
        if kind == "arb":
            return st.random_arbitrary_state(vals[0], s)
        return st.random_unentangled_state(vals[0], s)
    raise FormatError(f"unknown state kind {kind!r} in {spec!r}")


def resolve_state_spec(spec: str, seed: int) -> str:
    """Pin the seed into a random-state spec so it can be replayed on its own."""
    kind, _, rest = spec.partition(":")
    if kind in RANDOM_KINDS and rest and len(rest.split(":")) == 1:
        return f"{spec}:{seed}"
    return spec


def parse_model(spec: str, gamma: float = 1.0) -> NoiseModel:
    kind, _, rest = spec.partition(":")
    if kind == "file":
        try:
            doc = json.loads(Path(rest).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise FormatError(f"cannot read noise model file {rest!r}: {exc}") from exc
        return NoiseModel.from_dict(doc)
    parts = rest.split(":") if rest else []
    if kind == "qubit":
        return NoiseModel.qubit_register(*_ints(parts, spec, 1), gamma=gamma, dephasing=True)
    if kind == "qubit-ad":
        return NoiseModel.qubit_register(*_ints(parts, spec, 1), gamma=gamma, dephasing=False)
    if kind == "qudit":
        return NoiseModel.single_qudit(*_ints(parts, spec, 1), gamma=gamma)
    if kind == "array":
        count, d_each = _ints(parts, spec, 2)
        return NoiseModel.qudit_array(count, d_each, gamma=gamma)
    raise FormatError(f"unknown model kind {kind!r} in {spec!r}")


def qubit_count(dim: int) -> int:
    return max(1, math.ceil(math.log2(dim)))


def default_pair(dim: int, gamma: float = 1.0) -> tuple[NoiseModel, NoiseModel]:
    """Damped+dephased qubit register and a single damped qudit large enough for ``dim``."""
    n_q = qubit_count(dim)
    return NoiseModel.qubit_register(n_q, gamma), NoiseModel.single_qudit(2**n_q, gamma)
