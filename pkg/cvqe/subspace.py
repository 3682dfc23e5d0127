"""
Measurement-defined subspace solver.

Sampled outcomes B0 are expanded once by the Hamiltonian (B = B0 u B1), H is
projected onto span(B) and its lowest eigenpair E_B is returned. The
(N_tau, dtau) grid loop keeps the best E_B seen.
"""

import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
from loguru import logger

from cvqe.errors import EmptyBasisError, SolverError
from cvqe.fermion import BasisState, ChainModel
from cvqe.pauli import ZERO_CUTOFF, PauliHamiltonian, coupled_states, jordan_wigner
from cvqe.statevector import (
    EvolutionSchedule,
    SeedLike,
    StateVector,
    basis_state_vector,
    diabatic_evolve,
    exact_distribution,
    expectation,
    sample,
)

MEASURED = "measured"
COUPLED = "coupled"

Counts = Mapping[int, Union[int, float]]


@dataclass(frozen=True)
class Selection:
    """Which sampled states enter B0: all of them, the k most frequent, or those seen at least c times."""
    rule: str = "all"
    value: Optional[float] = None

    @classmethod
    def parse(cls, text: str) -> "Selection":
        text = text.strip()
        if text == "all":
            return cls("all")
        name, _, raw = text.partition(":")
        if name == "top_k" and raw.isdigit() and int(raw) >= 1:
            return cls("top_k", int(raw))
        if name == "min_count":
            try:
                value = float(raw)
            except ValueError:
                value = None
            if value is not None and value > 0:
                return cls("min_count", value)
        raise ValueError(f"bad selection rule {text!r} (expected all | top_k:<k> | min_count:<c>)")

    def __str__(self) -> str:
        if self.rule == "all":
            return "all"
        value = int(self.value) if float(self.value).is_integer() else self.value
        return f"{self.rule}:{value}"


DEFAULT_SELECTION = Selection("min_count", 1)


@dataclass(frozen=True)
class SubspaceBasis:
    states: Tuple[BasisState, ...]
    origins: Tuple[str, ...]

    def __post_init__(self):
        if len(self.states) != len(self.origins):
            raise ValueError("states and origins differ in length")
        if len(set(int(s) for s in self.states)) != len(self.states):
            raise ValueError("duplicate states in basis")

    def __len__(self) -> int:
        return len(self.states)

    def __contains__(self, state) -> bool:
        return int(state) in self.index

    @cached_property
    def index(self) -> Dict[int, int]:
        return {int(s): i for i, s in enumerate(self.states)}

    @property
    def measured(self) -> List[BasisState]:
        return [s for s, o in zip(self.states, self.origins) if o == MEASURED]

    @property
    def measured_size(self) -> int:
        return sum(1 for o in self.origins if o == MEASURED)

    def masks(self) -> np.ndarray:
        return np.fromiter((int(s) for s in self.states), dtype=np.int64, count=len(self.states))


@dataclass(frozen=True)
class ProjectedHamiltonian:
    basis: SubspaceBasis
    matrix: scipy.sparse.csr_matrix

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def entries(self) -> List[Tuple[int, int, Union[float, complex]]]:
        coo = self.matrix.tocoo()
        return list(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))

    def is_hermitian(self, tol: float = 1e-14) -> bool:
        diff = self.matrix - self.matrix.conj().T
        return diff.nnz == 0 or float(np.max(np.abs(diff.data))) <= tol


@dataclass
class SolveResult:
    energy: float
    eigenvector: np.ndarray
    basis: SubspaceBasis
    residual: float
    wall_time: float

    @property
    def b0_size(self) -> int:
        return self.basis.measured_size

    @property
    def b_size(self) -> int:
        return len(self.basis)


@dataclass
class PipelineResult:
    """One (N_tau, dtau, seed, selection) evaluation."""
    ntau: int
    dtau: float
    seed: Optional[int]
    selection: str
    shots: Optional[int]
    guiding_energy: float
    solve: SolveResult

    @property
    def energy(self) -> float:
        return self.solve.energy


@dataclass
class ConvergeResult:
    best: PipelineResult
    trace: List[PipelineResult] = field(default_factory=list)
    stopped_early: bool = False


def canonical_order(counts: Counts) -> List[BasisState]:
    """Descending count, ties by ascending mask."""
    return [BasisState(int(s)) for s in sorted(counts, key=lambda s: (-counts[s], int(s)))]


def build_B0(counts: Counts, selection: Selection = DEFAULT_SELECTION) -> SubspaceBasis:
    if not counts:
        raise EmptyBasisError("no measurement outcomes to select from")
    ordered = canonical_order(counts)
    if selection.rule == "top_k":
        kept = ordered[: int(selection.value)]
    elif selection.rule == "min_count":
        kept = [s for s in ordered if counts[s] >= selection.value]
    else:
        kept = ordered
    if not kept:
        raise EmptyBasisError(f"selection {selection} kept no states")
    return SubspaceBasis(tuple(kept), (MEASURED,) * len(kept))


def expand_basis(B0: SubspaceBasis, H: PauliHamiltonian, depth: int = 1) -> SubspaceBasis:
    """Append the states coupled to B0 by H (ascending mask), repeated `depth` times."""
    states = list(B0.states)
    origins = list(B0.origins)
    seen = {int(s) for s in states}
    frontier = list(states)
    for _ in range(depth):
        found = set()
        for n in frontier:
            found |= {int(m) for m in coupled_states(H, n)}
        new = sorted(found - seen)
        if not new:
            break
        states += [BasisState(m) for m in new]
        origins += [COUPLED] * len(new)
        seen.update(new)
        frontier = [BasisState(m) for m in new]
    return SubspaceBasis(tuple(states), tuple(origins))


def project(H: PauliHamiltonian, B: SubspaceBasis) -> ProjectedHamiltonian:
    """Sparse h_nm = <n|H|m> over B, evaluated per x_mask group in bulk."""
    masks = B.masks()
    order = np.argsort(masks)
    sorted_masks = masks[order]
    dim = masks.shape[0]
    rows, cols, vals = [], [], []
    for x, group in H.groups.items():
        targets = masks ^ x
        pos = np.searchsorted(sorted_masks, targets)
        pos = np.minimum(pos, dim - 1)
        hit = sorted_masks[pos] == targets
        if not np.any(hit):
            continue
        m = masks[hit]
        value = np.zeros(m.shape[0], dtype=np.complex128)
        for p in group:
            value += p.coefficient * p.phases(m)
        rows.append(order[pos[hit]])
        cols.append(np.flatnonzero(hit))
        vals.append(value)
    if rows:
        matrix = scipy.sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
        ).tocsr()
        matrix.sum_duplicates()
        matrix.data[np.abs(matrix.data) < ZERO_CUTOFF] = 0.0
        matrix.eliminate_zeros()
        if not np.any(matrix.data.imag):
            # real symmetric blocks go to the real Lanczos path
            matrix = matrix.real.tocsr()
    else:
        matrix = scipy.sparse.csr_matrix((dim, dim), dtype=np.float64)
    return ProjectedHamiltonian(B, matrix)


def _residual(matrix: scipy.sparse.spmatrix, energy: float, vector: np.ndarray) -> float:
    return float(np.linalg.norm(matrix @ vector - energy * vector))


def ground_eigen(Hb: ProjectedHamiltonian, dense_cutoff: int = 200, tol: float = 1e-10) -> SolveResult:
    """Lowest eigenpair: dense eigh up to dense_cutoff, restarted Lanczos (eigsh) above."""
    start = time.perf_counter()
    dim = Hb.dimension
    if dim <= dense_cutoff:
        values, vectors = scipy.linalg.eigh(Hb.matrix.toarray(), subset_by_index=[0, 0])
        energy, vector = float(values[0]), vectors[:, 0]
    else:
        v0 = np.full(dim, 1.0 / np.sqrt(dim), dtype=Hb.matrix.dtype)
        try:
            values, vectors = scipy.sparse.linalg.eigsh(
                Hb.matrix, k=1, which="SA", tol=tol, maxiter=10 * dim, v0=v0
            )
        except scipy.sparse.linalg.ArpackNoConvergence as e:
            residual = None
            if len(e.eigenvalues):
                residual = _residual(Hb.matrix, float(e.eigenvalues[0].real), e.eigenvectors[:, 0])
            raise SolverError(f"Lanczos did not converge on |B|={dim}", residual=residual) from e
        energy, vector = float(values[0].real), vectors[:, 0]

    residual = _residual(Hb.matrix, energy, vector)
    scale = max(scipy.sparse.linalg.norm(Hb.matrix), 1.0)
    if residual > 1e-8 * scale:
        raise SolverError(f"residual {residual:.3e} above bound on |B|={dim}", residual=residual)
    elapsed = time.perf_counter() - start
    logger.debug(f"ground_eigen |B|={dim} E_B={energy:.12f} residual={residual:.2e} ({elapsed:.3f}s)")
    return SolveResult(energy, vector, Hb.basis, residual, elapsed)


def rayleigh_quotient(Hb: ProjectedHamiltonian, coefficients: np.ndarray) -> float:
    """<psi(phi)|H|psi(phi)> for the subspace ansatz sum_n phi_n |n>, normalized."""
    v = np.asarray(coefficients, dtype=np.complex128)
    return float((np.vdot(v, Hb.matrix @ v) / np.vdot(v, v)).real)


def postselect(counts: Counts, Ne: int) -> Dict[BasisState, Union[int, float]]:
    """Drop outcomes outside the Ne particle-number sector."""
    return {BasisState(int(s)): c for s, c in counts.items() if int(s).bit_count() == Ne}


def derive_seed(seed: Optional[int], index: int) -> np.random.SeedSequence:
    """Independent RNG stream for grid point `index` of a run seeded with `seed`."""
    return np.random.SeedSequence(entropy=seed if seed is not None else 0, spawn_key=(index,))


@dataclass(frozen=True)
class PreparedModel:
    model: ChainModel
    H0: PauliHamiltonian
    H: PauliHamiltonian

    @classmethod
    def from_model(cls, model: ChainModel) -> "PreparedModel":
        return cls(model, jordan_wigner(model.initial_hamiltonian()), jordan_wigner(model.hamiltonian()))

    def guiding_state(self, sched: EvolutionSchedule) -> StateVector:
        phi0 = basis_state_vector(self.model.Q, self.model.initial_state())
        return diabatic_evolve(phi0, self.H0, self.H, sched)


def measure(state: StateVector, shots: Optional[int], seed: SeedLike) -> Dict[BasisState, Union[int, float]]:
    """Sampled counts, or the exact distribution when shots is None."""
    if shots is None:
        return exact_distribution(state)
    return sample(state, shots, seed)


def solve_from_counts(
    H: PauliHamiltonian,
    counts: Counts,
    selection: Selection = DEFAULT_SELECTION,
    expansion_depth: int = 1,
    dense_cutoff: int = 200,
    tol: float = 1e-10,
) -> SolveResult:
    B0 = build_B0(counts, selection)
    B = expand_basis(B0, H, depth=expansion_depth)
    logger.debug(f"subspace: |B0|={len(B0)} |B|={len(B)} selection={selection}")
    return ground_eigen(project(H, B), dense_cutoff=dense_cutoff, tol=tol)


def run_pipeline(
    model: ChainModel,
    schedule: EvolutionSchedule,
    shots: Optional[int] = 4096,
    seed: Optional[int] = 0,
    selection: Selection = DEFAULT_SELECTION,
    expansion_depth: int = 1,
    postselect_sector: bool = True,
    dense_cutoff: int = 200,
    tol: float = 1e-10,
    prepared: Optional[PreparedModel] = None,
    rng_seed: SeedLike = None,
) -> PipelineResult:
    """
    Prepare the guiding state, measure it, build B = B0 u B1, and return the
    lowest eigenvalue of the projected Hamiltonian alongside the guiding-state
    energy. `rng_seed` overrides `seed` as the sampling stream when given.
    """
    prepared = prepared or PreparedModel.from_model(model)
    guiding = prepared.guiding_state(schedule)
    guiding_energy = expectation(guiding, prepared.H)
    counts = measure(guiding, shots, rng_seed if rng_seed is not None else seed)
    if shots is None and selection.rule == "min_count":
        # exact distributions carry probabilities, not counts
        selection = Selection("all")
    if postselect_sector:
        counts = postselect(counts, model.Ne)
    solve = solve_from_counts(prepared.H, counts, selection, expansion_depth, dense_cutoff, tol)
    logger.info(
        f"N_tau={schedule.n_steps} dtau={schedule.dt:.6g}: E_guiding={guiding_energy:.10f} "
        f"E_B={solve.energy:.10f} |B0|={solve.b0_size} |B|={solve.b_size}"
    )
    return PipelineResult(
        ntau=schedule.n_steps,
        dtau=schedule.dt,
        seed=seed,
        selection=str(selection),
        shots=shots,
        guiding_energy=guiding_energy,
        solve=solve,
    )


def converge_loop(
    model: ChainModel,
    grid: Sequence[Tuple[int, float]],
    shots: Optional[int] = 4096,
    seed: Optional[int] = 0,
    selection: Selection = DEFAULT_SELECTION,
    tol_rel: float = 1e-6,
    patience: int = 3,
    expansion_depth: int = 1,
) -> ConvergeResult:
    """
    Walk the (N_tau, dtau) points in order, keeping the lowest E_B. Stops once
    `patience` consecutive points improve the best energy by less than tol_rel
    (relative).
    """
    if not grid:
        raise ValueError("empty (N_tau, dtau) grid")
    prepared = PreparedModel.from_model(model)
    trace: List[PipelineResult] = []
    best: Optional[PipelineResult] = None
    stall = 0
    for index, (ntau, dtau) in enumerate(grid):
        result = run_pipeline(
            model,
            EvolutionSchedule(ntau, dtau),
            shots=shots,
            seed=seed,
            selection=selection,
            expansion_depth=expansion_depth,
            prepared=prepared,
            rng_seed=derive_seed(seed, index),
        )
        trace.append(result)
        if best is None:
            best = result
            continue
        improvement = (best.energy - result.energy) / max(abs(best.energy), 1e-300)
        if result.energy < best.energy:
            best = result
        stall = stall + 1 if improvement < tol_rel else 0
        if stall >= patience:
            logger.info(f"converged after {len(trace)} of {len(grid)} points (E_B={best.energy:.10f})")
            return ConvergeResult(best, trace, stopped_early=index < len(grid) - 1)
    return ConvergeResult(best, trace, stopped_early=False)
