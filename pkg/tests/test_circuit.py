import math

import numpy as np
import pytest
import scipy.linalg

from cvqe.circuit import (
    Circuit,
    Gate,
    GateKind,
    circuit_unitary,
    compile_evolution,
    compile_pauli_exponential,
    emit_qasm,
    prepare_occupation,
    simulate_circuit,
)
from cvqe.errors import CapacityError, CompilationError, DimensionMismatchError
from cvqe.fermion import ChainModel
from cvqe.pauli import PauliString, jordan_wigner
from cvqe.statevector import EvolutionSchedule, basis_state_vector, diabatic_evolve, random_state
from tests.conftest import FIXTURES, kron_string


def _phase_aligned(a: np.ndarray, b: np.ndarray) -> bool:
    k = np.unravel_index(np.argmax(np.abs(b)), b.shape)
    phase = a[k] / b[k]
    return abs(abs(phase) - 1.0) < 1e-12 and np.allclose(a, phase * b, atol=1e-12)


def test_golden_qasm():
    c = compile_pauli_exponential(PauliString.from_label("X Z I Y"), 0.25, Q=4)
    assert emit_qasm(c) == (FIXTURES / "exp_xziy_q4.qasm").read_text()


def test_random_exponentials_match_expm(rng):
    for _ in range(1000):
        Q = int(rng.integers(1, 6))
        x = int(rng.integers(0, 1 << Q))
        z = int(rng.integers(0, 1 << Q))
        if not x | z:
            continue
        p = PauliString(x, z)
        phi = float(rng.uniform(-np.pi, np.pi))
        c = compile_pauli_exponential(p, phi, Q)
        expected = scipy.linalg.expm(1j * phi * kron_string(p, Q))
        assert _phase_aligned(circuit_unitary(c), expected)
        assert c.cnot_count == 2 * (p.weight - 1)


def test_single_z_is_exact_without_phase():
    c = compile_pauli_exponential(PauliString.from_label("Z"), 0.3)
    assert np.allclose(circuit_unitary(c), np.diag([np.exp(0.3j), np.exp(-0.3j)]))


def test_identity_string_rejected():
    with pytest.raises(CompilationError):
        compile_pauli_exponential(PauliString(0, 0), 0.1, 2)


@pytest.mark.parametrize("kind, qubits, angle", [
    (GateKind.RZ, (0,), None),
    (GateKind.RX, (0,), float("nan")),
    (GateKind.CNOT, (1, 1), None),
    (GateKind.CNOT, (0,), None),
    (GateKind.X, (0, 1), None),
])
def test_gate_validation(kind, qubits, angle):
    with pytest.raises(CompilationError):
        Gate(kind, qubits, angle)


def test_gate_outside_register_rejected():
    with pytest.raises(DimensionMismatchError):
        Circuit(2, [Gate(GateKind.CNOT, (0, 2))])


def test_inverse_undoes_circuit(rng):
    c = compile_pauli_exponential(PauliString.from_label("Y X Z"), 0.7)
    full = Circuit(3)
    full.extend(c)
    full.extend(c.inverse())
    assert np.allclose(circuit_unitary(full), np.eye(8), atol=1e-12)


def test_prepare_occupation():
    state = simulate_circuit(prepare_occupation(5, 0b10110), basis_state_vector(5, 0))
    assert np.isclose(abs(state.amplitudes[0b10110]), 1.0)
    assert prepare_occupation(3, 0).cnot_count == 0 and len(prepare_occupation(3, 0)) == 0


def test_evolution_circuit_matches_statevector():
    model = ChainModel(4, 2, dmu=0.5, V=0.8)
    H0, H = jordan_wigner(model.initial_hamiltonian()), jordan_wigner(model.hamiltonian())
    sched = EvolutionSchedule(6, 0.2)
    psi = random_state(4, 5)
    via_circuit = simulate_circuit(compile_evolution(H0, H, sched), psi)
    direct = diabatic_evolve(psi, H0, H, sched)
    assert _phase_aligned(via_circuit.amplitudes, direct.amplitudes)


def test_zero_steps_is_empty():
    model = ChainModel(4, 2)
    c = compile_evolution(jordan_wigner(model.initial_hamiltonian()), jordan_wigner(model.hamiltonian()), EvolutionSchedule(0, 0.1))
    assert len(c) == 0
    assert c.resources().as_dict() == {
        "cnot_count": 0, "depth": 0, "gate_count": 0, "n_steps": 0, "dropped_identity_terms": 0,
    }


def test_gate_count_scales_with_steps(q4_pauli):
    H0, H = q4_pauli
    one = compile_evolution(H0, H, EvolutionSchedule(1, 0.1)).resources()
    two = compile_evolution(H0, H, EvolutionSchedule(2, 0.1)).resources()
    assert two.gate_count == 2 * one.gate_count
    assert two.cnot_count == 2 * one.cnot_count
    assert two.dropped_identity_terms == 2 * one.dropped_identity_terms == 2


@pytest.mark.parametrize("V, expected", [(0.0, 196), (1.0, 294)])
def test_q50_cnot_census(V, expected):
    model = ChainModel(50, 25, dmu=0.2, V=V)
    c = compile_evolution(
        jordan_wigner(model.initial_hamiltonian()), jordan_wigner(model.hamiltonian()), EvolutionSchedule(1, 1 / 15)
    )
    assert c.cnot_count == expected
    assert c.Q == 50


def test_qasm_layout():
    c = prepare_occupation(3, 0b011)
    c.append(Gate(GateKind.RZ, (2,), math.pi))
    c.append(Gate(GateKind.CNOT, (0, 2)))
    lines = emit_qasm(c).splitlines()
    assert lines[:4] == ["OPENQASM 2.0;", 'include "qelib1.inc";', "qreg q[3];", "creg c[3];"]
    assert lines[4:] == ["x q[0];", "x q[1];", "rz(3.141592653589793) q[2];", "cx q[0],q[2];", "measure q -> c;"]


def test_depth_counts_parallel_layers():
    c = Circuit(4, [
        Gate(GateKind.X, (0,)),
        Gate(GateKind.X, (1,)),
        Gate(GateKind.CNOT, (0, 1)),
        Gate(GateKind.X, (3,)),
    ])
    assert c.depth() == 2


def test_capacity_limits():
    with pytest.raises(CapacityError):
        circuit_unitary(Circuit(11))
    with pytest.raises(CapacityError):
        simulate_circuit(Circuit(21), basis_state_vector(21, 0))
