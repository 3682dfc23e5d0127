"""
Bit-mask Pauli algebra and the Jordan-Wigner map for the spinless chain.

A string is stored as (x_mask, z_mask): qubit q carries X if only its x bit
is set, Z if only its z bit is set, Y if both are set (Y = i X Z).
Acting on a basis state |m>:

    P |m> = i^{|x & z|} (-1)^{|z & m|} |m ^ x>
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Iterable, List, Set, Tuple

import numpy as np
import scipy.sparse

from cvqe.errors import CapacityError, DimensionMismatchError
from cvqe.fermion import BasisState, FermionHamiltonian, TermKind

ZERO_CUTOFF = 1e-15
COUPLING_CUTOFF = 1e-12
MAX_MATRIX_QUBITS = 16

_LETTERS = {(0, 0): "I", (1, 0): "X", (1, 1): "Y", (0, 1): "Z"}
_I_POWERS = (1, 1j, -1, -1j)


def parity(values: np.ndarray) -> np.ndarray:
    """Popcount parity of each non-negative int64 entry."""
    a = np.array(values, dtype=np.int64, copy=True)
    for shift in (32, 16, 8, 4, 2, 1):
        a ^= a >> shift
    return a & 1


def register_indices(Q: int) -> np.ndarray:
    return np.arange(1 << Q, dtype=np.int64)


@dataclass(frozen=True)
class PauliString:
    x_mask: int
    z_mask: int
    coefficient: complex = 1.0

    @property
    def chi(self) -> int:
        """Number of X and Y factors."""
        return self.x_mask.bit_count()

    @property
    def support(self) -> int:
        return self.x_mask | self.z_mask

    @property
    def weight(self) -> int:
        return self.support.bit_count()

    @property
    def key(self) -> Tuple[int, int]:
        return self.x_mask, self.z_mask

    def is_identity(self) -> bool:
        return self.x_mask == 0 and self.z_mask == 0

    def is_diagonal(self) -> bool:
        return self.x_mask == 0

    def support_qubits(self) -> List[int]:
        s = self.support
        return [q for q in range(s.bit_length()) if (s >> q) & 1]

    def letter(self, q: int) -> str:
        return _LETTERS[((self.x_mask >> q) & 1, (self.z_mask >> q) & 1)]

    def label(self, Q: int) -> str:
        return " ".join(self.letter(q) for q in range(Q))

    def y_phase(self) -> complex:
        return _I_POWERS[(self.x_mask & self.z_mask).bit_count() % 4]

    def phase(self, m: int) -> complex:
        """Phase of P|m> = phase(m) |m ^ x>, unit coefficient."""
        sign = -1 if (self.z_mask & m).bit_count() % 2 else 1
        return self.y_phase() * sign

    def phases(self, indices: np.ndarray) -> np.ndarray:
        """Vectorized phase(m) over an index array."""
        signs = 1 - 2 * parity(indices & self.z_mask)
        return self.y_phase() * signs

    def with_coefficient(self, coefficient: complex) -> "PauliString":
        return PauliString(self.x_mask, self.z_mask, coefficient)

    def unit(self) -> "PauliString":
        return self.with_coefficient(1.0)

    @classmethod
    def from_label(cls, label: str, coefficient: complex = 1.0) -> "PauliString":
        """Letters I/X/Y/Z for qubits 0, 1, ... (spaces ignored)."""
        x = z = 0
        for q, ch in enumerate(label.replace(" ", "").upper()):
            if ch in "XY":
                x |= 1 << q
            if ch in "ZY":
                z |= 1 << q
            if ch not in "IXYZ":
                raise ValueError(f"bad Pauli letter {ch!r} in {label!r}")
        return cls(x, z, coefficient)


def _format_coefficient(c: complex) -> str:
    c = complex(c)
    if abs(c.imag) < ZERO_CUTOFF:
        return f"{c.real:+.12g}"
    return f"({c.real:+.12g}{c.imag:+.12g}j)"


def term_order_key(p: PauliString) -> Tuple[int, int, int]:
    """Diagonal strings first, then off-diagonal strings left to right (XX before YY)."""
    return (0 if p.is_diagonal() else 1, p.x_mask, p.z_mask)


@dataclass(frozen=True)
class PauliHamiltonian:
    """Sum of Pauli strings on Q qubits, merged and in canonical term order."""
    Q: int
    terms: Tuple[PauliString, ...]

    @classmethod
    def from_terms(cls, Q: int, terms: Iterable[PauliString], keep_zeros: bool = False) -> "PauliHamiltonian":
        merged: Dict[Tuple[int, int], complex] = {}
        for p in terms:
            if p.support >> Q:
                raise DimensionMismatchError(f"string {p} acts outside {Q} qubits")
            merged[p.key] = merged.get(p.key, 0.0) + complex(p.coefficient)
        kept = [
            PauliString(x, z, c) for (x, z), c in merged.items()
            if keep_zeros or abs(c) >= ZERO_CUTOFF
        ]
        return cls(Q, tuple(sorted(kept, key=term_order_key)))

    def __len__(self) -> int:
        return len(self.terms)

    @property
    def identity_coefficient(self) -> complex:
        for p in self.terms:
            if p.is_identity():
                return p.coefficient
        return 0.0

    def non_identity_terms(self) -> List[PauliString]:
        return [p for p in self.terms if not p.is_identity()]

    def is_diagonal(self) -> bool:
        return all(p.is_diagonal() for p in self.terms)

    @cached_property
    def groups(self) -> Dict[int, Tuple[PauliString, ...]]:
        """Terms grouped by x_mask (each group maps |m> to |m ^ x>)."""
        out: Dict[int, List[PauliString]] = {}
        for p in self.terms:
            out.setdefault(p.x_mask, []).append(p)
        return {x: tuple(ps) for x, ps in out.items()}

    def dump(self) -> str:
        """One line per string in the "±c · P_0 P_1 ... P_{Q-1}" format."""
        return "\n".join(f"{_format_coefficient(p.coefficient)} · {p.label(self.Q)}" for p in self.terms)

    def apply(self, amplitudes: np.ndarray) -> np.ndarray:
        """H|psi> over the 2^Q register without building a matrix."""
        if amplitudes.shape[0] != 1 << self.Q:
            raise DimensionMismatchError(f"state has {amplitudes.shape[0]} amplitudes, expected {1 << self.Q}")
        idx = register_indices(self.Q)
        out = np.zeros_like(amplitudes, dtype=np.complex128)
        for x, group in self.groups.items():
            source = idx ^ x
            factor = np.zeros(idx.shape[0], dtype=np.complex128)
            for p in group:
                factor += p.coefficient * p.phases(source)
            if amplitudes.ndim > 1:
                factor = factor.reshape((-1,) + (1,) * (amplitudes.ndim - 1))
            out += factor * amplitudes[source]
        return out

    def to_sparse(self) -> scipy.sparse.csr_matrix:
        if self.Q > MAX_MATRIX_QUBITS:
            raise CapacityError(f"refusing to build a 2^{self.Q} matrix")
        idx = register_indices(self.Q)
        dim = idx.shape[0]
        rows, cols, vals = [], [], []
        for p in self.terms:
            rows.append(idx ^ p.x_mask)
            cols.append(idx)
            vals.append(p.coefficient * p.phases(idx))
        if not rows:
            return scipy.sparse.csr_matrix((dim, dim), dtype=np.complex128)
        matrix = scipy.sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
        ).tocsr()
        matrix.sum_duplicates()
        return matrix

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()


def jordan_wigner(H: FermionHamiltonian, keep_zeros: bool = False) -> PauliHamiltonian:
    """
    n_q                 -> (1 - Z_q)/2
    c†_q c_q+1 + h.c.   -> (X_q X_q+1 + Y_q Y_q+1)/2
    n_q n_q+1           -> (1 - Z_q - Z_q+1 + Z_q Z_q+1)/4

    Only nearest neighbours occur, so no interior Z strings appear.
    """
    strings: List[PauliString] = []
    for term in H.terms:
        c = term.coefficient
        q = term.site
        a, b = 1 << q, 1 << (q + 1)
        if term.kind is TermKind.NUMBER:
            strings += [PauliString(0, 0, c / 2), PauliString(0, a, -c / 2)]
        elif term.kind is TermKind.HOPPING:
            pair = a | b
            strings += [PauliString(pair, 0, c / 2), PauliString(pair, pair, c / 2)]
        else:
            strings += [
                PauliString(0, 0, c / 4),
                PauliString(0, a, -c / 4),
                PauliString(0, b, -c / 4),
                PauliString(0, a | b, c / 4),
            ]
    return PauliHamiltonian.from_terms(H.Q, strings, keep_zeros=keep_zeros)


def matrix_element(H: PauliHamiltonian, n: int, m: int) -> complex:
    """<n|H|m>, summed over the strings whose x_mask equals n ^ m."""
    group = H.groups.get(int(n) ^ int(m))
    if group is None:
        return 0.0
    return complex(sum(p.coefficient * p.phase(int(m)) for p in group))


def coupled_states(H: PauliHamiltonian, n: int, cutoff: float = COUPLING_CUTOFF) -> Set[BasisState]:
    """Every |m> with |<m|H|n>| above the cutoff (n itself included when the diagonal survives)."""
    out = set()
    for x in H.groups:
        m = int(n) ^ x
        if abs(matrix_element(H, m, n)) > cutoff:
            out.add(BasisState(m))
    return out


def aligned_coefficients(H0: PauliHamiltonian, H: PauliHamiltonian) -> Tuple[List[PauliString], np.ndarray, np.ndarray]:
    """
    Union of the strings of H0 and H in canonical order with each side's
    coefficient (zero where absent). The interpolated Hamiltonian at
    fraction s has coefficients (1 - s) c0 + s c1 over this fixed list.
    """
    if H0.Q != H.Q:
        raise DimensionMismatchError(f"H0 acts on {H0.Q} qubits, H on {H.Q}")
    c0 = {p.key: p.coefficient for p in H0.terms}
    c1 = {p.key: p.coefficient for p in H.terms}
    keys = set(c0) | set(c1)
    strings = sorted((PauliString(x, z) for x, z in keys), key=term_order_key)
    first = np.array([c0.get(p.key, 0.0) for p in strings], dtype=np.complex128)
    second = np.array([c1.get(p.key, 0.0) for p in strings], dtype=np.complex128)
    return strings, first, second


def combine(H0: PauliHamiltonian, H: PauliHamiltonian, s: float) -> PauliHamiltonian:
    """(1 - s) H0 + s H with the union string set kept (zero coefficients retained)."""
    strings, c0, c1 = aligned_coefficients(H0, H)
    coefficients = (1.0 - s) * c0 + s * c1
    return PauliHamiltonian(H.Q, tuple(p.with_coefficient(c) for p, c in zip(strings, coefficients)))
