"""
Spinless-fermion chain: model and initial Hamiltonians, occupation basis
states, particle-number sectors and the two exact ground-energy oracles.

Orbital q is bit q of an occupation mask (least-significant bit = orbital 0).
Energies are stored in units of the hopping t.
"""

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
from loguru import logger

from cvqe.errors import CapacityError, InvalidDimensionError, InvalidFillingError

SECTOR_LIMIT = 10**7
DENSE_CUTOFF = 200


class TermKind(str, Enum):
    """Kinds of terms in the chain Hamiltonian."""
    NUMBER = "number"
    HOPPING = "hopping"
    DENSITY_DENSITY = "density_density"


@dataclass(frozen=True)
class FermionTerm:
    """
    One weighted term. ``site`` is q; hopping and density-density terms act on
    the adjacent pair (q, q+1). A hopping term stands for
    c†_q c_{q+1} + c†_{q+1} c_q as a single Hermitian unit.
    """
    kind: TermKind
    site: int
    coefficient: float

    @property
    def orbitals(self) -> Tuple[int, ...]:
        if self.kind is TermKind.NUMBER:
            return (self.site,)
        return (self.site, self.site + 1)


class BasisState(int):
    """Occupation bitstring; behaves as its integer mask for hashing and ordering."""

    def __new__(cls, occupations: int):
        if occupations < 0:
            raise InvalidFillingError(f"occupation mask must be non-negative, got {occupations}")
        return super().__new__(cls, occupations)

    @property
    def occupations(self) -> int:
        return int(self)

    @property
    def particle_number(self) -> int:
        return int(self).bit_count()

    def occupied(self) -> List[int]:
        return [q for q in range(int(self).bit_length()) if (self >> q) & 1]

    def label(self, Q: int) -> str:
        """Bitstring with orbital Q-1 leftmost, orbital 0 rightmost."""
        return format(int(self), f"0{Q}b")

    def __repr__(self) -> str:
        return f"BasisState({self.occupied()})"


@dataclass(frozen=True)
class FermionHamiltonian:
    """Second-quantized Hamiltonian on Q orbitals."""
    Q: int
    terms: Tuple[FermionTerm, ...]
    parameters: Dict[str, float] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.Q < 1:
            raise InvalidDimensionError(f"Q must be >= 1, got {self.Q}")
        for term in self.terms:
            if term.site < 0 or max(term.orbitals) >= self.Q:
                raise InvalidDimensionError(f"term {term} leaves the {self.Q}-orbital register")

    def describe(self) -> Dict[str, float]:
        """JSON-ready description {Q, dmu, t, V}."""
        return {"Q": self.Q, **self.parameters}

    @classmethod
    def from_description(cls, description: Dict[str, float]) -> "FermionHamiltonian":
        return build_model_hamiltonian(
            int(description["Q"]),
            description.get("dmu", 0.0),
            description.get("t", 0.0),
            description.get("V", 0.0),
        )


@dataclass(frozen=True)
class ChainModel:
    """
    Parameters of one chain instance: Q orbitals, Ne electrons. dmu, t and V
    may be given in any common unit; every derived Hamiltonian and energy is
    expressed in units of t, so time steps are in units of tau0 = 1/t.
    """
    Q: int
    Ne: int
    dmu: float = 0.75
    t: float = 1.0
    V: float = 1.0

    def __post_init__(self):
        _check_dimension(self.Q)
        _check_filling(self.Q, self.Ne)
        if not self.t > 0:
            raise ValueError(f"hopping t must be > 0 (it sets the energy unit), got {self.t}")

    @property
    def dmu_t(self) -> float:
        return self.dmu / self.t

    @property
    def V_t(self) -> float:
        return self.V / self.t

    def hamiltonian(self) -> "FermionHamiltonian":
        return build_model_hamiltonian(self.Q, self.dmu_t, 1.0, self.V_t)

    def initial_hamiltonian(self) -> "FermionHamiltonian":
        return build_initial_hamiltonian(self.Q, self.dmu_t)

    def initial_state(self) -> BasisState:
        return initial_state(self.Q, self.Ne)

    def is_free(self) -> bool:
        return self.V == 0.0

    def free_energy(self) -> float:
        """Free-fermion ground energy of the V = 0 part, units of t."""
        return free_fermion_energy(self.Q, self.dmu_t, 1.0, self.Ne)

    def reference_energy(self, limit: int = 10**5) -> Optional[float]:
        """Exact ground energy when available: free-fermion for V=0, ED for enumerable sectors."""
        if self.is_free():
            return self.free_energy()
        if sector_size(self.Q, self.Ne) > limit:
            return None
        return exact_ground_energy_ed(self.hamiltonian(), self.Ne)


def _check_dimension(Q: int) -> None:
    if Q < 1:
        raise InvalidDimensionError(f"Q must be >= 1, got {Q}")


def _check_filling(Q: int, Ne: int) -> None:
    if Ne < 0 or Ne > Q:
        raise InvalidFillingError(f"cannot place Ne={Ne} electrons in Q={Q} orbitals")


def build_model_hamiltonian(Q: int, dmu: float, t: float, V: float) -> FermionHamiltonian:
    """Level spacing dmu, nearest-neighbour hopping -t, nearest-neighbour interaction V."""
    _check_dimension(Q)
    terms = [FermionTerm(TermKind.NUMBER, q, q * dmu) for q in range(Q)]
    terms += [FermionTerm(TermKind.HOPPING, q, -t) for q in range(Q - 1)]
    terms += [FermionTerm(TermKind.DENSITY_DENSITY, q, V) for q in range(Q - 1)]
    return FermionHamiltonian(Q, tuple(terms), {"dmu": dmu, "t": t, "V": V})


def build_initial_hamiltonian(Q: int, dmu: float) -> FermionHamiltonian:
    """Diagonal H0 = dmu * sum_q q n_q whose ground state fills the lowest levels."""
    _check_dimension(Q)
    terms = tuple(FermionTerm(TermKind.NUMBER, q, q * dmu) for q in range(Q))
    return FermionHamiltonian(Q, terms, {"dmu": dmu, "t": 0.0, "V": 0.0})


def initial_state(Q: int, Ne: int) -> BasisState:
    """Lowest Ne orbitals occupied."""
    _check_dimension(Q)
    _check_filling(Q, Ne)
    return BasisState((1 << Ne) - 1)


def sector_size(Q: int, Ne: int) -> int:
    return math.comb(Q, Ne)


def sector_states(Q: int, Ne: int, limit: int = SECTOR_LIMIT) -> List[BasisState]:
    """All masks with popcount Ne in ascending integer order."""
    _check_dimension(Q)
    _check_filling(Q, Ne)
    size = sector_size(Q, Ne)
    if size > limit:
        raise CapacityError(f"sector Q={Q}, Ne={Ne} has {size:.3e} states (limit {limit:.0e})")
    masks = sorted(sum(1 << q for q in combo) for combo in itertools.combinations(range(Q), Ne))
    return [BasisState(m) for m in masks]


def _annihilate(mask: int, q: int) -> Optional[Tuple[int, int]]:
    if not (mask >> q) & 1:
        return None
    sign = -1 if (mask & ((1 << q) - 1)).bit_count() % 2 else 1
    return mask ^ (1 << q), sign


def _create(mask: int, q: int) -> Optional[Tuple[int, int]]:
    if (mask >> q) & 1:
        return None
    sign = -1 if (mask & ((1 << q) - 1)).bit_count() % 2 else 1
    return mask | (1 << q), sign


def _hop(mask: int, dest: int, src: int) -> Optional[Tuple[int, int]]:
    """c†_dest c_src |mask>."""
    removed = _annihilate(mask, src)
    if removed is None:
        return None
    added = _create(removed[0], dest)
    if added is None:
        return None
    return added[0], removed[1] * added[1]


def apply_fermion_term(term: FermionTerm, mask: int) -> List[Tuple[int, float]]:
    """Action of one term on |mask> by the second-quantized rules, as (mask, amplitude) pairs."""
    q = term.site
    if term.kind is TermKind.NUMBER:
        return [(mask, term.coefficient)] if (mask >> q) & 1 else []
    if term.kind is TermKind.DENSITY_DENSITY:
        both = (mask >> q) & 1 and (mask >> (q + 1)) & 1
        return [(mask, term.coefficient)] if both else []
    out = []
    for dest, src in ((q, q + 1), (q + 1, q)):
        moved = _hop(mask, dest, src)
        if moved is not None:
            out.append((moved[0], term.coefficient * moved[1]))
    return out


def sector_matrix(H: FermionHamiltonian, Ne: int, limit: int = SECTOR_LIMIT) -> Tuple[List[BasisState], scipy.sparse.csr_matrix]:
    """H restricted to the Ne sector, rows/cols in sector_states order."""
    states = sector_states(H.Q, Ne, limit=limit)
    index = {int(s): i for i, s in enumerate(states)}
    rows, cols, vals = [], [], []
    for col, state in enumerate(states):
        for term in H.terms:
            for target, amp in apply_fermion_term(term, int(state)):
                rows.append(index[target])
                cols.append(col)
                vals.append(amp)
    dim = len(states)
    matrix = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
    matrix.sum_duplicates()
    return states, matrix


def _lowest_eigenpair(matrix: scipy.sparse.spmatrix) -> Tuple[float, np.ndarray]:
    dim = matrix.shape[0]
    if dim <= DENSE_CUTOFF:
        values, vectors = scipy.linalg.eigh(matrix.toarray(), subset_by_index=[0, 0])
        return float(values[0]), vectors[:, 0]
    values, vectors = scipy.sparse.linalg.eigsh(matrix, k=1, which="SA", tol=1e-12)
    return float(values[0]), vectors[:, 0]


def exact_ground_state(H: FermionHamiltonian, Ne: int) -> Tuple[float, List[BasisState], np.ndarray]:
    """Lowest eigenpair of the Ne sector: (energy, sector states, sector vector)."""
    states, matrix = sector_matrix(H, Ne)
    energy, vector = _lowest_eigenpair(matrix)
    logger.debug(f"ED Q={H.Q} Ne={Ne}: dim={len(states)} E0={energy:.12f}")
    return energy, states, vector


def exact_ground_energy_ed(H: FermionHamiltonian, Ne: int) -> float:
    return exact_ground_state(H, Ne)[0]


def embed_sector_vector(Q: int, states: Sequence[int], vector: np.ndarray) -> np.ndarray:
    """Place sector amplitudes into a 2^Q register array."""
    full = np.zeros(1 << Q, dtype=np.complex128)
    full[np.asarray([int(s) for s in states], dtype=np.int64)] = vector
    return full


def free_fermion_energy(Q: int, dmu: float, t: float, Ne: int) -> float:
    """Sum of the Ne lowest single-particle levels of the tridiagonal (q*dmu, -t) matrix."""
    _check_dimension(Q)
    _check_filling(Q, Ne)
    if Ne == 0:
        return 0.0
    diagonal = dmu * np.arange(Q, dtype=float)
    if Q == 1:
        return float(diagonal[0])
    off_diagonal = np.full(Q - 1, -t, dtype=float)
    levels = scipy.linalg.eigh_tridiagonal(
        diagonal, off_diagonal, eigvals_only=True, select="i", select_range=(0, Ne - 1)
    )
    return float(np.sum(levels))


def to_hartree(energy_t: float, t_hartree: float) -> float:
    """Relabel an energy in units of t as Hartree."""
    return energy_t * t_hartree
