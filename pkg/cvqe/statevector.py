"""
Dense statevector engine: basis preparation, Pauli exponentials, first-order
Trotterized diabatic evolution, a time-ordered ODE reference, expectation
values and seeded multinomial sampling.

Amplitude index = occupation mask (bit q = qubit q).
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import scipy.integrate
from loguru import logger

from cvqe.errors import CapacityError, DimensionMismatchError, SolverError
from cvqe.fermion import BasisState
from cvqe.pauli import PauliHamiltonian, PauliString, aligned_coefficients, register_indices

MAX_QUBITS = 26
REFERENCE_MAX_QUBITS = 12
EXACT_SUPPORT_CUTOFF = 1e-14

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator, None]


@dataclass
class StateVector:
    Q: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.Q > MAX_QUBITS:
            raise CapacityError(f"{self.Q} qubits exceed the statevector cap of {MAX_QUBITS}")
        if self.amplitudes.shape != (1 << self.Q,):
            raise DimensionMismatchError(f"expected {1 << self.Q} amplitudes, got {self.amplitudes.shape}")

    def copy(self) -> "StateVector":
        return StateVector(self.Q, self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class EvolutionSchedule:
    """N_tau steps of duration dt (units of tau0 = 1/t), canonical term order within a step."""
    n_steps: int
    dt: float
    term_order: str = "canonical"

    def __post_init__(self):
        if self.n_steps < 0:
            raise ValueError(f"n_steps must be >= 0, got {self.n_steps}")
        if self.dt < 0:
            raise ValueError(f"dt must be >= 0, got {self.dt}")
        if self.term_order != "canonical":
            raise ValueError(f"unknown term order {self.term_order!r}")

    @property
    def total_time(self) -> float:
        return self.n_steps * self.dt

    def fractions(self) -> np.ndarray:
        """Interpolation fraction at each step's right endpoint, i/N_tau for i = 1..N_tau."""
        if self.n_steps == 0:
            return np.zeros(0)
        return np.arange(1, self.n_steps + 1, dtype=float) / self.n_steps


# -- gate kernels (axis 0 is the register index; trailing batch axes allowed) --

def apply_single_qubit(amplitudes: np.ndarray, q: int, matrix: np.ndarray) -> np.ndarray:
    dim = amplitudes.shape[0]
    lo = 1 << q
    rest = amplitudes.shape[1:]
    a = amplitudes.reshape((dim // (2 * lo), 2, lo) + rest)
    out = np.moveaxis(np.tensordot(matrix, a, axes=([1], [1])), 0, 1)
    return out.reshape(amplitudes.shape)


def apply_cnot(amplitudes: np.ndarray, control: int, target: int) -> np.ndarray:
    idx = register_indices(amplitudes.shape[0].bit_length() - 1)
    return amplitudes[idx ^ (((idx >> control) & 1) << target)]


def apply_x(amplitudes: np.ndarray, q: int) -> np.ndarray:
    idx = register_indices(amplitudes.shape[0].bit_length() - 1)
    return amplitudes[idx ^ (1 << q)]


def popcounts(Q: int) -> np.ndarray:
    idx = register_indices(Q)
    counts = np.zeros_like(idx)
    for q in range(Q):
        counts += (idx >> q) & 1
    return counts


# -- public operations --

def basis_state_vector(Q: int, n: int) -> StateVector:
    if int(n) >> Q:
        raise DimensionMismatchError(f"mask {int(n):#b} does not fit {Q} qubits")
    if Q > MAX_QUBITS:
        raise CapacityError(f"{Q} qubits exceed the statevector cap of {MAX_QUBITS}")
    amplitudes = np.zeros(1 << Q, dtype=np.complex128)
    amplitudes[int(n)] = 1.0
    return StateVector(Q, amplitudes)


def _pauli_action(amplitudes: np.ndarray, p: PauliString, idx: np.ndarray) -> np.ndarray:
    source = idx ^ p.x_mask
    phases = p.phases(source)
    if amplitudes.ndim > 1:
        phases = phases.reshape((-1,) + (1,) * (amplitudes.ndim - 1))
    return phases * amplitudes[source]


def apply_pauli_exponential(state: StateVector, P: PauliString, theta: float) -> StateVector:
    """state <- exp(-i theta P) state for the unit-coefficient string P, in place."""
    if P.support >> state.Q:
        raise DimensionMismatchError(f"string acts outside {state.Q} qubits")
    if theta == 0.0:
        return state
    if P.is_identity():
        state.amplitudes *= np.exp(-1j * theta)
        return state
    idx = register_indices(state.Q)
    rotated = _pauli_action(state.amplitudes, P, idx)
    state.amplitudes = np.cos(theta) * state.amplitudes - 1j * np.sin(theta) * rotated
    return state


def diabatic_evolve(
    initial: StateVector,
    H0: PauliHamiltonian,
    H: PauliHamiltonian,
    sched: EvolutionSchedule,
) -> StateVector:
    """
    Guiding state prod_{i=1..N} exp(-i H(i dt) dt) |initial>, each factor split
    into per-string exponentials in canonical order. The diagonal strings of a
    step commute and are applied together as one phase vector.
    """
    if not (H0.Q == H.Q == initial.Q):
        raise DimensionMismatchError(f"register sizes differ: state {initial.Q}, H0 {H0.Q}, H {H.Q}")
    state = initial.copy()
    if sched.n_steps == 0 or sched.dt == 0.0:
        return state

    strings, c0, c1 = aligned_coefficients(H0, H)
    if np.max(np.abs(c0.imag), initial=0.0) > 1e-12 or np.max(np.abs(c1.imag), initial=0.0) > 1e-12:
        raise ValueError("Hamiltonian coefficients must be real for Hermitian strings")
    c0, c1 = c0.real, c1.real

    idx = register_indices(state.Q)
    diag0 = np.zeros(idx.shape[0])
    diag1 = np.zeros(idx.shape[0])
    hops = []
    for k, p in enumerate(strings):
        if p.is_diagonal():
            d = p.phases(idx).real
            diag0 += c0[k] * d
            diag1 += c1[k] * d
        else:
            source = idx ^ p.x_mask
            hops.append((k, source, p.phases(source)))

    amps = state.amplitudes
    dt = sched.dt
    for s in sched.fractions():
        amps = amps * np.exp(-1j * dt * ((1.0 - s) * diag0 + s * diag1))
        for k, source, phases in hops:
            theta = ((1.0 - s) * c0[k] + s * c1[k]) * dt
            amps = np.cos(theta) * amps - 1j * np.sin(theta) * (phases * amps[source])
    state.amplitudes = amps
    logger.debug(f"diabatic evolution: N_tau={sched.n_steps} dt={dt} norm={state.norm():.15f}")
    return state


def reference_evolution(
    initial: StateVector,
    H0: PauliHamiltonian,
    H: PauliHamiltonian,
    T: float,
    tol: float = 1e-10,
) -> StateVector:
    """Time-ordered evolution under (1 - tau/T) H0 + (tau/T) H on [0, T] by adaptive DOP853."""
    if initial.Q > REFERENCE_MAX_QUBITS:
        raise CapacityError(f"reference evolution limited to {REFERENCE_MAX_QUBITS} qubits, got {initial.Q}")
    if not (H0.Q == H.Q == initial.Q):
        raise DimensionMismatchError(f"register sizes differ: state {initial.Q}, H0 {H0.Q}, H {H.Q}")
    if T == 0.0:
        return initial.copy()

    m0 = H0.to_sparse()
    m1 = H.to_sparse()

    def rhs(tau, y):
        s = tau / T
        return -1j * ((1.0 - s) * (m0 @ y) + s * (m1 @ y))

    solution = scipy.integrate.solve_ivp(
        rhs, (0.0, T), initial.amplitudes.astype(np.complex128), method="DOP853", rtol=tol, atol=tol
    )
    if not solution.success:
        raise SolverError(f"reference integration failed: {solution.message}")
    amps = solution.y[:, -1]
    return StateVector(initial.Q, amps / np.linalg.norm(amps))


def expectation(state: StateVector, H: PauliHamiltonian) -> float:
    if H.Q != state.Q:
        raise DimensionMismatchError(f"H acts on {H.Q} qubits, state has {state.Q}")
    return float(np.vdot(state.amplitudes, H.apply(state.amplitudes)).real)


def sample(state: StateVector, shots: int, seed: SeedLike = None) -> Dict[BasisState, int]:
    """Multinomial draw of `shots` outcomes from |amplitude|^2 (PCG64 via default_rng)."""
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    rng = np.random.default_rng(seed)
    p = state.probabilities()
    counts = rng.multinomial(shots, p / p.sum())
    hits = np.flatnonzero(counts)
    return {BasisState(int(i)): int(counts[i]) for i in hits}


def exact_distribution(state: StateVector, cutoff: float = EXACT_SUPPORT_CUTOFF) -> Dict[BasisState, float]:
    """Probabilities above the cutoff, keyed by basis state in ascending mask order."""
    p = state.probabilities()
    hits = np.flatnonzero(p > cutoff)
    return {BasisState(int(i)): float(p[i]) for i in hits}


def fidelity(a: StateVector, b: StateVector) -> float:
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def state_error(a: StateVector, b: StateVector) -> float:
    """Phase-insensitive distance sqrt(1 - |<a|b>|^2)."""
    return float(np.sqrt(max(0.0, 1.0 - fidelity(a, b))))


def sector_leakage(state: StateVector, Ne: int) -> float:
    """Probability outside the Ne particle-number sector."""
    p = state.probabilities()
    return float(p[popcounts(state.Q) != Ne].sum())


def dump_amplitudes(state: StateVector, path: Union[str, Path]) -> None:
    """Little-endian (re, im) float64 pairs, index = basis mask."""
    state.amplitudes.astype("<c16").tofile(str(path))


def load_amplitudes(path: Union[str, Path], Q: int) -> StateVector:
    amps = np.fromfile(str(path), dtype="<c16")
    return StateVector(Q, amps.astype(np.complex128))


def random_state(Q: int, seed: SeedLike = None, support: Optional[np.ndarray] = None) -> StateVector:
    """Haar-like random normalized state, optionally restricted to given masks."""
    rng = np.random.default_rng(seed)
    amps = np.zeros(1 << Q, dtype=np.complex128)
    where = np.arange(1 << Q) if support is None else np.asarray(support, dtype=np.int64)
    amps[where] = rng.normal(size=where.shape[0]) + 1j * rng.normal(size=where.shape[0])
    return StateVector(Q, amps / np.linalg.norm(amps))
