"""
Shot-collection protocols for building the subspace.

Method 1 measures every Pauli string in its own diagonal basis and
back-expands each kept rotated outcome over the 2^chi unrotated states it
can come from. Method 2 measures once in the computational basis and lets
the Hamiltonian expansion supply the neighbours. Also here: the term-wise
VQE estimator and the eigenstate-weight diagnostic.
"""

import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from cvqe.circuit import Circuit, Gate, GateKind, basis_change, rx, ry
from cvqe.errors import DimensionMismatchError, EmptyBasisError
from cvqe.fermion import BasisState
from cvqe.pauli import PauliHamiltonian, PauliString, parity, register_indices
from cvqe.statevector import SeedLike, StateVector, apply_single_qubit, exact_distribution, sample
from cvqe.subspace import (
    MEASURED,
    Selection,
    SolveResult,
    SubspaceBasis,
    build_B0,
    derive_seed,
    expand_basis,
    ground_eigen,
    postselect,
    project,
)

DEGENERACY_GUARD = 1e-8
SUPPORT_CUTOFF = 1e-12
AGREEMENT_TOL = 1e-8
EPSILON_MODES = ("frequency", "amplitude")


@dataclass(frozen=True)
class RotationLayer:
    """Single-qubit basis changes taking one Pauli string onto a Z-type string."""
    Q: int
    changes: Tuple[Tuple[int, str], ...] = ()

    def is_identity(self) -> bool:
        return not self.changes

    def circuit(self) -> Circuit:
        gates = []
        for q, letter in self.changes:
            if letter == "X":
                gates.append(Gate(GateKind.RY, (q,), -np.pi / 2))
            else:
                gates.append(Gate(GateKind.RX, (q,), np.pi / 2))
        return Circuit(self.Q, gates)

    def apply_array(self, amplitudes: np.ndarray) -> np.ndarray:
        for q, letter in self.changes:
            matrix = ry(-np.pi / 2) if letter == "X" else rx(np.pi / 2)
            amplitudes = apply_single_qubit(amplitudes, q, matrix)
        return amplitudes

    def apply(self, state: StateVector) -> StateVector:
        return StateVector(state.Q, self.apply_array(state.amplitudes.copy()))

    def matrix(self) -> np.ndarray:
        return self.apply_array(np.eye(1 << self.Q, dtype=np.complex128))


def diagonalizing_rotation(P: PauliString, Q: Optional[int] = None) -> RotationLayer:
    Q = Q if Q is not None else max(P.support.bit_length(), 1)
    changes = []
    for q in P.support_qubits():
        before, _ = basis_change(P, q)
        if before is not None:
            changes.append((q, P.letter(q)))
    return RotationLayer(Q, tuple(changes))


def rotated_eigenvalues(P: PauliString, outcomes: np.ndarray) -> np.ndarray:
    """E_nl = c * (-1)^{|a & support|} for rotated outcomes a."""
    return complex(P.coefficient).real * (1 - 2 * parity(np.asarray(outcomes, dtype=np.int64) & P.support))


def back_expand(P: PauliString, outcome: int) -> List[BasisState]:
    """The 2^chi unrotated masks {a ^ s : s subset of x_mask}."""
    bits = [1 << q for q in range(P.x_mask.bit_length()) if (P.x_mask >> q) & 1]
    out = []
    for r in range(len(bits) + 1):
        for combo in itertools.combinations(bits, r):
            out.append(BasisState(int(outcome) ^ sum(combo)))
    return sorted(out)


def effective_epsilon(epsilon: float, mode: str) -> float:
    if mode not in EPSILON_MODES:
        raise ValueError(f"epsilon_mode must be one of {EPSILON_MODES}, got {mode!r}")
    return epsilon * epsilon if mode == "amplitude" else epsilon


def _frequencies(state: StateVector, shots: Optional[int], seed) -> Dict[BasisState, float]:
    if shots is None:
        return exact_distribution(state)
    counts = sample(state, shots, seed)
    return {s: c / shots for s, c in counts.items()}


@dataclass(frozen=True)
class TermRecord:
    string: str
    chi: int
    n_r: int
    shots: Optional[int]
    kept: int = 0

    def as_dict(self) -> dict:
        return {"string": self.string, "chi": self.chi, "N_r": self.n_r, "shots": self.shots, "kept": self.kept}


@dataclass
class MethodReport:
    method: str
    basis: SubspaceBasis
    shots_used: Optional[int]
    terms: List[TermRecord] = field(default_factory=list)
    energy: Optional[float] = None
    ground_support: FrozenSet[int] = frozenset()

    @property
    def circuits(self) -> int:
        return len(self.terms) if self.method == "rotated" else 1

    def chi_census(self) -> Dict[int, int]:
        census: Dict[int, int] = {}
        for t in self.terms:
            census[t.chi] = census.get(t.chi, 0) + 1
        return dict(sorted(census.items()))


def _term_records(H: PauliHamiltonian, shots: Optional[int]) -> List[TermRecord]:
    return [TermRecord(p.label(H.Q), p.chi, 2 ** p.chi, shots) for p in H.non_identity_terms()]


def _basis_from_masks(masks) -> SubspaceBasis:
    states = tuple(BasisState(m) for m in sorted(set(int(m) for m in masks)))
    if not states:
        raise EmptyBasisError("no outcome survived the threshold")
    return SubspaceBasis(states, (MEASURED,) * len(states))


def sample_method1(
    state: StateVector,
    H: PauliHamiltonian,
    shots_per_term: Optional[int],
    epsilon: float = 1e-6,
    seed: Optional[int] = 0,
    epsilon_mode: str = "frequency",
    Ne: Optional[int] = None,
    threads: int = 1,
) -> Tuple[SubspaceBasis, MethodReport]:
    """
    Rotated-basis collection. Term l is sampled on its own derived stream;
    outcomes with frequency above epsilon are back-expanded over 2^chi_l
    masks. With Ne set, masks outside that sector are dropped.
    """
    if H.Q != state.Q:
        raise DimensionMismatchError(f"H acts on {H.Q} qubits, state has {state.Q}")
    ensure_real_coefficients(H)
    threshold = effective_epsilon(epsilon, epsilon_mode)
    terms = H.non_identity_terms()

    def collect(item):
        l, p = item
        rotated = diagonalizing_rotation(p, H.Q).apply(state)
        freqs = _frequencies(rotated, shots_per_term, derive_seed(seed, l))
        kept = [a for a, f in freqs.items() if f > threshold]
        masks = set()
        for a in kept:
            masks.update(int(m) for m in back_expand(p, a))
        return len(kept), masks

    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        results = list(pool.map(collect, enumerate(terms)))

    union = set()
    records = []
    for p, (n_kept, masks) in zip(terms, results):
        union |= masks
        records.append(TermRecord(p.label(H.Q), p.chi, 2 ** p.chi, shots_per_term, n_kept))
    if Ne is not None:
        union = {m for m in union if m.bit_count() == Ne}
    basis = _basis_from_masks(union)
    used = None if shots_per_term is None else shots_per_term * len(terms)
    logger.debug(f"method 1: L={len(terms)} |B~|={len(basis)} shots={used}")
    return basis, MethodReport("rotated", basis, used, records)


def sample_method2(
    state: StateVector,
    H: PauliHamiltonian,
    shots: Optional[int],
    epsilon: float = 1e-6,
    seed: SeedLike = 0,
    epsilon_mode: str = "frequency",
    Ne: Optional[int] = None,
    expansion_depth: int = 1,
) -> Tuple[SubspaceBasis, MethodReport]:
    """Computational-basis collection followed by the Hamiltonian expansion."""
    if H.Q != state.Q:
        raise DimensionMismatchError(f"H acts on {H.Q} qubits, state has {state.Q}")
    threshold = effective_epsilon(epsilon, epsilon_mode)
    freqs = _frequencies(state, shots, seed)
    kept = {s: f for s, f in freqs.items() if f > threshold}
    if Ne is not None:
        kept = postselect(kept, Ne)
    B0 = build_B0(kept, Selection("all"))
    basis = expand_basis(B0, H, depth=expansion_depth)
    logger.debug(f"method 2: |B0|={len(B0)} |B|={len(basis)} shots={shots}")
    return basis, MethodReport("computational", basis, shots, _term_records(H, shots))


def vqe_expectation_estimate(
    state: StateVector,
    H: PauliHamiltonian,
    shots_per_term: Optional[int],
    seed: Optional[int] = 0,
) -> Tuple[float, float]:
    """
    Term-by-term estimate of <H> with its jackknife standard error. For one
    term the samples are +-c, so the leave-one-out variance of the mean is
    c^2 (1 - m^2) / (n - 1) with m the mean sign.
    """
    if shots_per_term is not None and shots_per_term < 2:
        raise ValueError("jackknife error needs at least 2 shots per term")
    ensure_real_coefficients(H)
    energy = float(complex(H.identity_coefficient).real)
    variance = 0.0
    for l, p in enumerate(H.non_identity_terms()):
        rotated = diagonalizing_rotation(p, H.Q).apply(state)
        c = float(complex(p.coefficient).real)
        if shots_per_term is None:
            probs = rotated.probabilities()
            signs = 1 - 2 * parity(register_indices(H.Q) & p.support)
            energy += c * float(np.dot(probs, signs))
            continue
        counts = sample(rotated, shots_per_term, derive_seed(seed, l))
        outcomes = np.fromiter(counts.keys(), dtype=np.int64)
        weights = np.fromiter(counts.values(), dtype=np.int64)
        plus = int(weights[parity(outcomes & p.support) == 0].sum())
        m = (2 * plus - shots_per_term) / shots_per_term
        energy += c * m
        variance += c * c * (1.0 - m * m) / (shots_per_term - 1)
    return energy, float(np.sqrt(variance))


@dataclass
class ComparisonReport:
    L: int
    budget: int
    method1: MethodReport
    method2: MethodReport
    method2_16x: MethodReport
    overlap: float
    overlap_16x: float
    tol: float = AGREEMENT_TOL

    @property
    def circuit_ratio(self) -> int:
        return self.L

    @property
    def energy_gap(self) -> float:
        """|E_B(m1) - E_B(m2)| at equal budget."""
        return abs(self.method1.energy - self.method2.energy)

    @property
    def m1_covers_m2(self) -> bool:
        """Method-1 basis holds every state of the method-2 ground vector."""
        return self.method2.ground_support <= {int(s) for s in self.method1.basis.states}

    @property
    def m2_covers_m1(self) -> bool:
        return self.method1.ground_support <= {int(s) for s in self.method2.basis.states}

    @property
    def verdict(self) -> str:
        """
        "equivalent" when both bases hold each other's ground support and
        E_B agrees within tol; otherwise the method with the lower E_B, or
        "inconclusive" when the energies agree but the supports do not.
        """
        if self.energy_gap <= self.tol:
            return "equivalent" if self.m1_covers_m2 and self.m2_covers_m1 else "inconclusive"
        return "method1" if self.method1.energy < self.method2.energy else "method2"

    def as_dict(self) -> dict:
        return {
            "L": self.L,
            "per_term": [t.as_dict() for t in self.method1.terms],
            "E_B_m1": self.method1.energy,
            "E_B_m2": self.method2.energy,
            "E_B_m2_16x": self.method2_16x.energy,
            "dE_B_m1_m2": self.energy_gap,
            "m1_covers_m2": self.m1_covers_m2,
            "m2_covers_m1": self.m2_covers_m1,
            "verdict": self.verdict,
            "overlap": self.overlap,
            "overlap_16x": self.overlap_16x,
            "circuit_ratio": self.circuit_ratio,
            "budget": self.budget,
            "B_m1": len(self.method1.basis),
            "B_m2": len(self.method2.basis),
            "B_m2_16x": len(self.method2_16x.basis),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)


def ground_support(result: SolveResult, cutoff: float = SUPPORT_CUTOFF) -> FrozenSet[int]:
    """Basis states carrying more than `cutoff` of the ground-vector weight."""
    weights = np.abs(result.eigenvector) ** 2
    return frozenset(int(result.basis.states[i]) for i in np.flatnonzero(weights > cutoff))


def subspace_overlap(a: SubspaceBasis, b: SubspaceBasis) -> float:
    """|A n B| / |A u B| over basis masks."""
    sa, sb = {int(s) for s in a.states}, {int(s) for s in b.states}
    return len(sa & sb) / len(sa | sb)


def compare_methods(
    state: StateVector,
    H: PauliHamiltonian,
    budget: int,
    epsilon: float = 1e-6,
    seed: Optional[int] = 0,
    epsilon_mode: str = "frequency",
    Ne: Optional[int] = None,
    exact: bool = False,
    dense_cutoff: int = 200,
) -> ComparisonReport:
    """
    Method 1 with budget / L shots per term against method 2 with the full
    budget and with sixteen times the budget. exact=True uses the exact
    distributions for all three.
    """
    L = len(H.non_identity_terms())
    per_term = None if exact else max(budget // max(L, 1), 1)
    full = None if exact else budget
    sixteen = None if exact else 16 * budget

    _, m1 = sample_method1(state, H, per_term, epsilon, seed, epsilon_mode, Ne)
    _, m2 = sample_method2(state, H, full, epsilon, derive_seed(seed, L), epsilon_mode, Ne)
    _, m2x = sample_method2(state, H, sixteen, epsilon, derive_seed(seed, L + 1), epsilon_mode, Ne)
    for report in (m1, m2, m2x):
        solve = ground_eigen(project(H, report.basis), dense_cutoff=dense_cutoff)
        report.energy = solve.energy
        report.ground_support = ground_support(solve)

    result = ComparisonReport(
        L=L,
        budget=budget,
        method1=m1,
        method2=m2,
        method2_16x=m2x,
        overlap=subspace_overlap(m1.basis, m2.basis),
        overlap_16x=subspace_overlap(m1.basis, m2x.basis),
    )
    logger.info(
        f"methods: L={L} E_B(m1)={m1.energy:.10f} E_B(m2)={m2.energy:.10f} "
        f"E_B(m2,16x)={m2x.energy:.10f} overlap={result.overlap:.3f} verdict={result.verdict}"
    )
    return result


@dataclass
class WeightDiagnostic:
    energy: float
    table: pd.DataFrame
    max_residual: float
    skipped: int
    total: int

    @property
    def skipped_fraction(self) -> float:
        return self.skipped / self.total if self.total else 0.0

    def profile(self) -> pd.DataFrame:
        """|phi_nl|^2 against 1/|E - E_nl|^2 for the entries that were evaluated."""
        kept = self.table[~self.table["skipped"]]
        return kept[["term", "n", "phi_abs2", "inv_gap2"]].reset_index(drop=True)


def eigenstate_weight_diagnostic(
    H: PauliHamiltonian,
    eigenvector: np.ndarray,
    l: Optional[int] = None,
    guard: float = DEGENERACY_GUARD,
) -> WeightDiagnostic:
    """
    Check phi_nl (E - E_nl) = sum over (n', l') != (n, l) of
    E_n'l' phi_n'l' <Psi_nl|Psi_n'l'> for every rotated basis state n of
    term l (all terms when l is None), where phi_nl = <n|R_l|Psi>.
    The full sum over l' equals R_l H |Psi>, so the right side is
    R_l H Psi minus the (n, l) entry itself.
    """
    psi = np.asarray(eigenvector, dtype=np.complex128)
    if psi.shape != (1 << H.Q,):
        raise DimensionMismatchError(f"expected {1 << H.Q} amplitudes, got {psi.shape}")
    ensure_real_coefficients(H)
    psi = psi / np.linalg.norm(psi)
    h_psi = H.apply(psi)
    idx = register_indices(H.Q)

    terms = list(H.terms) if l is None else [H.terms[l]]
    indices = range(len(H.terms)) if l is None else [l]

    layers = [diagonalizing_rotation(p, H.Q) for p in H.terms]
    phis = [layer.apply_array(psi.copy()) for layer in layers]
    eigs = [rotated_eigenvalues(p, idx) for p in H.terms]
    energy = float(sum(np.dot(e, np.abs(phi) ** 2) for e, phi in zip(eigs, phis)))

    frames = []
    for k, p in zip(indices, terms):
        phi, e_nl = phis[k], eigs[k]
        numerator = layers[k].apply_array(h_psi.copy()) - e_nl * phi
        gap = energy - e_nl
        skipped = np.abs(gap) <= guard
        safe_gap = np.where(skipped, 1.0, gap)
        residual = np.where(skipped, np.nan, np.abs(phi - numerator / safe_gap))
        frames.append(pd.DataFrame({
            "term": k,
            "string": p.label(H.Q),
            "n": idx,
            "E_nl": e_nl,
            "phi_abs2": np.abs(phi) ** 2,
            "inv_gap2": np.where(skipped, np.nan, 1.0 / safe_gap ** 2),
            "residual": residual,
            "skipped": skipped,
        }))
    table = pd.concat(frames, ignore_index=True)
    n_skipped = int(table["skipped"].sum())
    if n_skipped:
        logger.warning(f"weight diagnostic skipped {n_skipped} of {len(table)} near-degenerate entries")
    evaluated = table.loc[~table["skipped"], "residual"]
    max_residual = float(evaluated.max()) if len(evaluated) else 0.0
    return WeightDiagnostic(energy, table, max_residual, n_skipped, len(table))


def ensure_real_coefficients(H: PauliHamiltonian) -> None:
    """Measured strings need real coefficients."""
    for p in H.terms:
        if abs(complex(p.coefficient).imag) > 1e-12:
            raise ValueError(f"string {p.label(H.Q)} has a complex coefficient {p.coefficient}")
