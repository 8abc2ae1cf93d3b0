import functools

import numpy as np
import pytest

# acceptance lines collected during the run, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def dense_lowering(d):
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), k=1)


def embed(local, site, site_dims):
    """Place ``local`` on ``site``; site 0 is the least significant digit."""
    out = np.eye(1)
    for s in reversed(range(len(site_dims))):
        out = np.kron(out, local if s == site else np.eye(site_dims[s]))
    return out


def dense_collapse_ops(site_dims, gamma=1.0, dephasing=False):
    ops = []
    rates = np.broadcast_to(np.asarray(gamma, dtype=float), (len(site_dims),))
    for s, d in enumerate(site_dims):
        b = dense_lowering(d)
        ops.append((rates[s], embed(b, s, site_dims)))
        if dephasing:
            ops.append((rates[s], embed(b.T @ b, s, site_dims)))
    return ops


def dense_lindblad(ops, rho):
    out = np.zeros_like(rho, dtype=complex)
    for g, c in ops:
        cd = c.conj().T
        cdc = cd @ c
        out += g * (c @ rho @ cd - 0.5 * (cdc @ rho + rho @ cdc))
    return out


def random_density(dim, rng):
    x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = x @ x.conj().T
    return rho / np.trace(rho)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@functools.lru_cache(maxsize=None)
def cached(fn, *args):
    return fn(*args)
