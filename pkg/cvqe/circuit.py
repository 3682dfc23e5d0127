"""
Gate-level compilation of Pauli exponentials and of the diabatic evolution
operator, resource counting, OpenQASM 2.0 output and statevector checks.

Conventions: RZ(theta) = exp(-i theta Z / 2) (likewise RX, RY), so
exp(i phi P) compiles to RZ(-2 phi) between the CNOT chains. X support
qubits are rotated with RY(-pi/2) before and RY(pi/2) after; Y support
qubits with RX(pi/2) before and RX(-pi/2) after.
"""

import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger

from cvqe.errors import CapacityError, CompilationError, DimensionMismatchError
from cvqe.pauli import PauliHamiltonian, PauliString, aligned_coefficients
from cvqe.statevector import EvolutionSchedule, StateVector, apply_cnot, apply_single_qubit, apply_x

SIMULATION_MAX_QUBITS = 20
UNITARY_MAX_QUBITS = 10
HALF_PI = math.pi / 2


class GateKind(str, Enum):
    RX = "rx"
    RY = "ry"
    RZ = "rz"
    CNOT = "cx"
    X = "x"


ROTATIONS = (GateKind.RX, GateKind.RY, GateKind.RZ)


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    qubits: Tuple[int, ...]
    angle: Optional[float] = None

    def __post_init__(self):
        if self.kind in ROTATIONS:
            if self.angle is None or not math.isfinite(self.angle):
                raise CompilationError(f"{self.kind.value} needs a finite angle, got {self.angle}")
        if self.kind is GateKind.CNOT:
            if len(self.qubits) != 2 or self.qubits[0] == self.qubits[1]:
                raise CompilationError(f"cx needs two distinct qubits, got {self.qubits}")
        elif len(self.qubits) != 1:
            raise CompilationError(f"{self.kind.value} acts on one qubit, got {self.qubits}")

    def inverse(self) -> "Gate":
        if self.kind in ROTATIONS:
            return Gate(self.kind, self.qubits, -self.angle)
        return self

    def to_qasm(self) -> str:
        targets = ",".join(f"q[{q}]" for q in self.qubits)
        if self.kind in ROTATIONS:
            return f"{self.kind.value}({float(self.angle)!r}) {targets};"
        return f"{self.kind.value} {targets};"


@dataclass(frozen=True)
class ResourceSummary:
    cnot_count: int
    depth: int
    gate_count: int
    n_steps: int
    dropped_identity_terms: int = 0

    def as_dict(self) -> Dict[str, int]:
        return asdict(self)


@dataclass
class Circuit:
    """Gates applied in list order (leftmost first)."""
    Q: int
    gates: List[Gate] = field(default_factory=list)
    n_steps: int = 0
    dropped_identity_terms: int = 0

    def __post_init__(self):
        for gate in self.gates:
            self._check(gate)

    def _check(self, gate: Gate) -> None:
        if max(gate.qubits) >= self.Q or min(gate.qubits) < 0:
            raise DimensionMismatchError(f"{gate} acts outside {self.Q} qubits")

    def __len__(self) -> int:
        return len(self.gates)

    def append(self, gate: Gate) -> None:
        self._check(gate)
        self.gates.append(gate)

    def extend(self, other: "Circuit") -> None:
        if other.Q > self.Q:
            raise DimensionMismatchError(f"cannot place a {other.Q}-qubit circuit on {self.Q} qubits")
        self.gates.extend(other.gates)

    @property
    def cnot_count(self) -> int:
        return sum(1 for g in self.gates if g.kind is GateKind.CNOT)

    def depth(self) -> int:
        level = [0] * self.Q
        for gate in self.gates:
            layer = max(level[q] for q in gate.qubits) + 1
            for q in gate.qubits:
                level[q] = layer
        return max(level, default=0)

    def resources(self) -> ResourceSummary:
        return ResourceSummary(
            cnot_count=self.cnot_count,
            depth=self.depth(),
            gate_count=len(self.gates),
            n_steps=self.n_steps,
            dropped_identity_terms=self.dropped_identity_terms,
        )

    def inverse(self) -> "Circuit":
        return Circuit(self.Q, [g.inverse() for g in reversed(self.gates)], self.n_steps, self.dropped_identity_terms)


def rx(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)


def ry(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def rz(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


_ROTATION_MATRICES = {GateKind.RX: rx, GateKind.RY: ry, GateKind.RZ: rz}


def basis_change(P: PauliString, q: int) -> Tuple[Optional[Gate], Optional[Gate]]:
    """(before, after) gates rotating qubit q of P onto Z; (None, None) for Z/identity."""
    letter = P.letter(q)
    if letter == "X":
        return Gate(GateKind.RY, (q,), -HALF_PI), Gate(GateKind.RY, (q,), HALF_PI)
    if letter == "Y":
        return Gate(GateKind.RX, (q,), HALF_PI), Gate(GateKind.RX, (q,), -HALF_PI)
    return None, None


def compile_pauli_exponential(P: PauliString, phi: float, Q: Optional[int] = None) -> Circuit:
    """Gates for exp(i phi P), P taken with unit coefficient."""
    if P.is_identity():
        raise CompilationError("identity string is a global phase")
    Q = Q if Q is not None else P.support.bit_length()
    support = P.support_qubits()
    changes = [basis_change(P, q) for q in support]
    chain = [Gate(GateKind.CNOT, (a, b)) for a, b in zip(support, support[1:])]

    gates = [before for before, _ in changes if before is not None]
    gates += chain
    gates.append(Gate(GateKind.RZ, (support[-1],), -2.0 * phi))
    gates += list(reversed(chain))
    gates += [after for _, after in changes if after is not None]
    return Circuit(Q, gates)


def prepare_occupation(Q: int, mask: int) -> Circuit:
    """X gates that flip |0...0> into |mask>."""
    return Circuit(Q, [Gate(GateKind.X, (q,)) for q in range(Q) if (int(mask) >> q) & 1])


def compile_evolution(H0: PauliHamiltonian, H: PauliHamiltonian, sched: EvolutionSchedule) -> Circuit:
    """
    Trotterized diabatic evolution: for each step i the exponentials
    exp(-i c_l(i dt) dt P_l) in the same canonical order used by the
    statevector engine. Identity strings only add a global phase and are
    dropped; every step carries the same gate structure.
    """
    strings, c0, c1 = aligned_coefficients(H0, H)
    identity = [k for k, p in enumerate(strings) if p.is_identity()]
    circuit = Circuit(H.Q, n_steps=sched.n_steps, dropped_identity_terms=len(identity) * sched.n_steps)
    for s in sched.fractions():
        for k, p in enumerate(strings):
            if p.is_identity():
                continue
            theta = float(((1.0 - s) * c0[k] + s * c1[k]).real) * sched.dt
            circuit.extend(compile_pauli_exponential(p, -theta, H.Q))
    summary = circuit.resources()
    logger.debug(f"compiled N_tau={sched.n_steps}: {summary.gate_count} gates, {summary.cnot_count} CNOTs, depth {summary.depth}")
    return circuit


def _run_gates(c: Circuit, amplitudes: np.ndarray) -> np.ndarray:
    for gate in c.gates:
        if gate.kind is GateKind.CNOT:
            amplitudes = apply_cnot(amplitudes, *gate.qubits)
        elif gate.kind is GateKind.X:
            amplitudes = apply_x(amplitudes, gate.qubits[0])
        else:
            amplitudes = apply_single_qubit(amplitudes, gate.qubits[0], _ROTATION_MATRICES[gate.kind](gate.angle))
    return amplitudes


def simulate_circuit(c: Circuit, initial: StateVector) -> StateVector:
    if c.Q > SIMULATION_MAX_QUBITS:
        raise CapacityError(f"circuit simulation limited to {SIMULATION_MAX_QUBITS} qubits, got {c.Q}")
    if c.Q != initial.Q:
        raise DimensionMismatchError(f"circuit has {c.Q} qubits, state has {initial.Q}")
    return StateVector(initial.Q, _run_gates(c, initial.amplitudes.copy()))


def circuit_unitary(c: Circuit) -> np.ndarray:
    """Dense unitary of the circuit (column j = image of basis state j)."""
    if c.Q > UNITARY_MAX_QUBITS:
        raise CapacityError(f"unitary construction limited to {UNITARY_MAX_QUBITS} qubits, got {c.Q}")
    return _run_gates(c, np.eye(1 << c.Q, dtype=np.complex128))


def emit_qasm(c: Circuit) -> str:
    """OpenQASM 2.0 text with one quantum and one classical register and a final measure-all."""
    lines = [
        "OPENQASM 2.0;",
        'include "qelib1.inc";',
        f"qreg q[{c.Q}];",
        f"creg c[{c.Q}];",
    ]
    lines += [gate.to_qasm() for gate in c.gates]
    lines.append("measure q -> c;")
    return "\n".join(lines) + "\n"
