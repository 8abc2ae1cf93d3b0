import math

import numpy as np
import pytest
import scipy.linalg
from scipy.optimize import brentq

from qmemsim.errors import IntegrationError, InvalidArgumentError, NoCrossingError
from qmemsim.integrator import IntegratorConfig
from qmemsim.noise import CollapseChannel, NoiseModel, OperatorSpec
from qmemsim.propagate import FidelityTrace, evolve, evolve_nh, time_to_fidelity
from qmemsim.states import EncodingMap, equal_superposition_state, fock_state, ghz_state, random_arbitrary_state

LN43 = math.log(4 / 3)


def test_zero_rates_keep_fidelity():
    trace = evolve(NoiseModel.qubit_register(2, gamma=0.0), ghz_state(2), 3.0)
    np.testing.assert_allclose(trace.fidelities, 1.0, atol=1e-14)


def test_single_qubit_excited_decay():
    trace = evolve(NoiseModel.qubit_register(1), fock_state(2, 1), 4.0, t_eval=np.linspace(0, 4, 9))
    np.testing.assert_allclose(trace.fidelities, np.exp(-trace.times), atol=1e-8)
    assert trace.times[0] == 0.0 and trace.fidelities[0] == pytest.approx(1.0, abs=1e-15)
    assert set(np.linspace(0.5, 4, 8)) <= set(trace.times.tolist())


@pytest.mark.parametrize("n, d", [(8, 64), (3, 16), (40, 41)])
def test_fock_decay_law(n, d):
    gamma = 0.8
    trace = evolve(NoiseModel.single_qudit(d, gamma), fock_state(d, n), 3.0 / (n * gamma))
    np.testing.assert_allclose(trace.fidelities, np.exp(-n * gamma * trace.times), atol=1e-7)
    assert trace.metadata["max_trace_error"] <= 1e-8
    assert trace.metadata["simulated_dim"] == n + 1


def test_crossing_closed_forms():
    single = time_to_fidelity(NoiseModel.qubit_register(1), fock_state(2, 1), 0.75)
    assert single.t_cross == pytest.approx(LN43, rel=1e-8)
    assert abs(single.fidelity - 0.75) < 1e-9
    fock = time_to_fidelity(NoiseModel.single_qudit(64), fock_state(64, 8), 0.75)
    assert fock.t_cross == pytest.approx(LN43 / 8, rel=1e-8)


def exact_ghz_ratio(n, target=0.75):
    top = 2**n - 1

    def qubit(t):
        return 0.25 + 0.25 * (1 - math.exp(-t)) ** n + 0.75 * math.exp(-n * t) - target

    def qudit(t):
        return 0.25 + 0.25 * (1 - math.exp(-t)) ** top + 0.25 * math.exp(-top * t) + 0.5 * math.exp(-top * t / 2) - target

    return brentq(qubit, 1e-12, 50, xtol=1e-15) / brentq(qudit, 1e-12, 50, xtol=1e-15)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_ghz_ratio_matches_exact_solution(n):
    qubit = time_to_fidelity(NoiseModel.qubit_register(n), ghz_state(n), 0.75)
    qudit = time_to_fidelity(NoiseModel.single_qudit(2**n), ghz_state(n), 0.75)
    ratio = qubit.t_cross / qudit.t_cross
    assert ratio == pytest.approx(exact_ghz_ratio(n), rel=1e-7)
    # above the first-order value (2^n - 1) / (2n)
    assert ratio > (2**n - 1) / (2 * n)


def test_ghz_qubit_matches_exact_solution():
    # damping+dephasing GHZ at gamma = 1: F = 1/4 + (1 - e^-t)^n / 4 + 3 e^(-n t) / 4
    n = 3
    trace = evolve(NoiseModel.qubit_register(n), ghz_state(n), 2.0, t_eval=np.linspace(0, 2, 21))
    t = trace.times
    exact = 0.25 + 0.25 * (1 - np.exp(-t)) ** n + 0.75 * np.exp(-n * t)
    np.testing.assert_allclose(trace.fidelities, exact, atol=1e-8)


def test_ghz_qudit_matches_exact_solution():
    d = 8
    trace = evolve(NoiseModel.single_qudit(d), EncodingMap.single_qudit(d).place(ghz_state(3)), 1.0,
                   t_eval=np.linspace(0, 1, 11))
    t = trace.times
    # |7> cascades to |0> with probability (1 - e^-t)^7; its coherence with |0> decays as e^{-7t/2}
    exact = 0.25 + 0.25 * (1 - np.exp(-t)) ** 7 + 0.25 * np.exp(-7 * t) + 0.5 * np.exp(-3.5 * t)
    np.testing.assert_allclose(trace.fidelities, exact, atol=1e-8)


def test_reduce_matches_full_simulation():
    model = NoiseModel.single_qudit(32)
    psi = model.encoding.place(ghz_state(3))
    a = time_to_fidelity(model, psi, 0.75, reduce=True)
    b = time_to_fidelity(model, psi, 0.75, reduce=False)
    assert a.t_cross == pytest.approx(b.t_cross, rel=1e-7)
    qubits = NoiseModel.qubit_register(4)
    psi = fock_state(16, 5)
    ta = evolve(qubits, psi, 1.0, t_eval=[0.5, 1.0])
    tb = evolve(qubits, psi, 1.0, t_eval=[0.5, 1.0], reduce=False)
    assert ta.metadata["simulated_dim"] == 4
    np.testing.assert_allclose(ta.fidelities[-1], tb.fidelities[-1], atol=1e-9)


def test_tolerance_halving_converged():
    model = NoiseModel.qubit_register(4)
    psi = random_arbitrary_state(16, 3)
    a = time_to_fidelity(model, psi, 0.75, IntegratorConfig())
    b = time_to_fidelity(model, psi, 0.75, IntegratorConfig(rtol=0.5e-8, atol=0.5e-10))
    assert abs(a.t_cross - b.t_cross) / a.t_cross < 1e-6


def test_gamma_rescaling_halves_crossing():
    model = NoiseModel.single_qudit(16)
    psi = equal_superposition_state(16)
    t1 = time_to_fidelity(model, psi, 0.75).t_cross
    t2 = time_to_fidelity(model.scaled(2.0), psi, 0.75).t_cross
    assert abs(t2 - t1 / 2) / (t1 / 2) < 1e-9


def test_no_crossing_for_vacuum():
    with pytest.raises(NoCrossingError) as info:
        time_to_fidelity(NoiseModel.single_qudit(8), fock_state(8, 0), 0.75)
    assert info.value.final_fidelity == pytest.approx(1.0)
    with pytest.raises(NoCrossingError):
        time_to_fidelity(NoiseModel.single_qudit(8), fock_state(8, 1), 0.5, IntegratorConfig(horizon=0.1))


def test_invalid_inputs():
    with pytest.raises(InvalidArgumentError):
        time_to_fidelity(NoiseModel.single_qudit(8), fock_state(8, 1), 1.0)
    with pytest.raises(InvalidArgumentError):
        evolve(NoiseModel.single_qudit(8), fock_state(4, 1), 1.0)
    with pytest.raises(InvalidArgumentError):
        evolve(NoiseModel.single_qudit(8), fock_state(8, 1), 0.0)


def test_partial_trace_attached_on_failure():
    with pytest.raises(IntegrationError) as info:
        evolve(NoiseModel.qubit_register(3), ghz_state(3), 10.0, IntegratorConfig(max_steps=4))
    partial = info.value.partial
    assert partial is not None and not partial.metadata["completed"]
    assert len(partial) >= 1


def _cycle_model(n=8, leak=0.01):
    dim = n + 1
    chans = []
    for i in range(n):
        hop = np.zeros((dim, dim))
        hop[(i + 1) % n, i] = 1.0
        out = np.zeros((dim, dim))
        out[n, i] = 1.0
        chans += [CollapseChannel(1.0, OperatorSpec.from_matrix(hop)), CollapseChannel(leak, OperatorSpec.from_matrix(out))]
    return NoiseModel.custom(chans)


def test_nonmonotone_fidelity_flagged():
    # population circulates around a jump cycle, so F dips, recovers, then leaks away
    model = _cycle_model()
    with pytest.warns(RuntimeWarning, match="rose"):
        res = time_to_fidelity(model, fock_state(9, 0), 0.04)
    assert res.nonmonotone
    assert res.t_cross > 12.0


def test_nh_ghz_formulas():
    n, t_end = 4, 1.0
    qubit = evolve_nh(NoiseModel.qubit_register(n), ghz_state(n), t_end)
    np.testing.assert_allclose(np.sqrt(qubit.fidelities), 0.5 * (1 + np.exp(-n * qubit.times)), atol=1e-14)
    d = 2**n
    qudit = evolve_nh(NoiseModel.single_qudit(d), ghz_state(n), t_end)
    np.testing.assert_allclose(np.sqrt(qudit.fidelities), 0.5 * (1 + np.exp(-(d - 1) * qudit.times / 2)),
                               atol=1e-14)


def test_nh_matches_lindblad_for_fock():
    model = NoiseModel.single_qudit(16)
    psi = fock_state(16, 11)
    grid = np.linspace(0, 0.3, 31)
    lind = evolve(model, psi, 0.3, t_eval=grid[1:])
    nh = evolve_nh(model, psi, 0.3, t_eval=grid)
    keep = np.isin(lind.times, grid)
    np.testing.assert_allclose(lind.fidelities[keep], nh.fidelities, atol=1e-7)


def test_nh_runge_kutta_path_matches_expm():
    # C = |0>(<1| + <2|) has a non-diagonal C^+C
    c = np.zeros((3, 3))
    c[0, 1] = c[0, 2] = 1.0
    model = NoiseModel.custom([CollapseChannel(0.7, OperatorSpec.from_matrix(c))])
    psi = random_arbitrary_state(3, 2)
    trace = evolve_nh(model, psi, 1.0, t_eval=[0.25, 0.5, 1.0])
    assert trace.metadata["method"] == "runge-kutta"
    gen = sum(0.5 * ch.rate * (ch.operator.to_dense().conj().T @ ch.operator.to_dense()) for ch in model.compile())
    for t, f in zip(trace.times, trace.fidelities):
        v = scipy.linalg.expm(-gen * t) @ psi.amplitudes
        assert f == pytest.approx(abs(np.vdot(psi.amplitudes, v)) ** 2, abs=1e-8)


def test_trace_csv_round_trip(tmp_path):
    trace = evolve(NoiseModel.qubit_register(2), ghz_state(2), 0.5)
    trace.to_csv(tmp_path / "t.csv")
    again = FidelityTrace.from_csv(tmp_path / "t.csv")
    assert np.array_equal(again.times, trace.times)
    assert np.array_equal(again.fidelities, trace.fidelities)
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "t,fidelity"
