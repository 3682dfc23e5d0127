import numpy as np
import pytest

from cvqe.errors import DimensionMismatchError
from cvqe.fermion import ChainModel, build_model_hamiltonian, sector_matrix
from cvqe.pauli import (
    PauliHamiltonian,
    PauliString,
    aligned_coefficients,
    combine,
    coupled_states,
    jordan_wigner,
    matrix_element,
    parity,
)
from tests.conftest import kron_string, random_pauli_sum


def test_letters_and_labels():
    p = PauliString.from_label("X Z I Y")
    assert (p.x_mask, p.z_mask) == (0b1001, 0b1010)
    assert p.label(4) == "X Z I Y"
    assert p.chi == 2 and p.weight == 3
    assert p.support_qubits() == [0, 1, 3]


def test_y_acts_with_standard_phase():
    H = PauliHamiltonian.from_terms(1, [PauliString.from_label("Y")])
    out = H.apply(np.array([1.0, 0.0], dtype=complex))
    assert np.allclose(out, [0.0, 1j])


def test_single_strings_match_kronecker(rng):
    for _ in range(30):
        Q = int(rng.integers(1, 5))
        p = PauliString(int(rng.integers(0, 1 << Q)), int(rng.integers(0, 1 << Q)))
        dense = PauliHamiltonian(Q, (p,)).to_dense()
        assert np.allclose(dense, kron_string(p, Q), atol=1e-14)


def test_parity_matches_popcount():
    values = np.array([0, 1, 3, 7, 2**40 + 5, 12345678901], dtype=np.int64)
    assert parity(values).tolist() == [int(v).bit_count() % 2 for v in values.tolist()]


def test_merge_and_drop_zeros():
    H = PauliHamiltonian.from_terms(2, [
        PauliString(0b11, 0, 0.5),
        PauliString(0b11, 0, -0.5),
        PauliString(0, 0b01, 1.0),
    ])
    assert [p.key for p in H.terms] == [(0, 0b01)]
    kept = PauliHamiltonian.from_terms(2, [PauliString(0b11, 0, 0.5), PauliString(0b11, 0, -0.5)], keep_zeros=True)
    assert len(kept) == 1


def test_string_outside_register_rejected():
    with pytest.raises(DimensionMismatchError):
        PauliHamiltonian.from_terms(2, [PauliString(0b100, 0)])


def test_jordan_wigner_census():
    H = jordan_wigner(build_model_hamiltonian(8, 0.75, 1.0, 1.0))
    Q = 8
    assert len(H.non_identity_terms()) == Q + 2 * (Q - 1) + (Q - 1)
    assert len(H) == 1 + Q + 2 * (Q - 1) + (Q - 1)
    assert max(p.chi for p in H.terms) <= 4
    assert H.terms[0].is_identity()


def test_canonical_order_puts_xx_before_yy():
    H = jordan_wigner(build_model_hamiltonian(3, 0.5, 1.0, 1.0))
    off = [p for p in H.terms if not p.is_diagonal()]
    assert [p.label(3) for p in off] == ["X X I", "Y Y I", "I X X", "I Y Y"]
    assert all(p.is_diagonal() for p in H.terms[: len(H) - len(off)])


def test_jordan_wigner_matches_second_quantization(rng):
    for Q in range(1, 7):
        for _ in range(20):
            dmu, t, V = rng.uniform(-1.5, 1.5, size=3)
            fermionic = build_model_hamiltonian(Q, dmu, t, V)
            dense = jordan_wigner(fermionic).to_dense()
            masks = np.arange(1 << Q)
            counts = np.array([int(m).bit_count() for m in masks])
            for Ne in range(Q + 1):
                states, block = sector_matrix(fermionic, Ne)
                idx = np.array([int(s) for s in states])
                assert np.allclose(dense[np.ix_(idx, idx)], block.toarray(), atol=1e-12)
                others = masks[counts != Ne]
                assert np.allclose(dense[np.ix_(others, idx)], 0.0, atol=1e-12)


def test_apply_matches_dense(rng):
    H = random_pauli_sum(4, 9, rng)
    v = rng.normal(size=16) + 1j * rng.normal(size=16)
    assert np.allclose(H.apply(v), H.to_dense() @ v)
    batch = rng.normal(size=(16, 3)) + 0j
    assert np.allclose(H.apply(batch), H.to_dense() @ batch)


def test_matrix_element_matches_dense(rng):
    H = random_pauli_sum(3, 6, rng)
    dense = H.to_dense()
    for n in range(8):
        for m in range(8):
            assert matrix_element(H, n, m) == pytest.approx(dense[n, m], abs=1e-14)


def test_coupled_states_of_chain_state():
    H = jordan_wigner(ChainModel(4, 2).hamiltonian())
    assert coupled_states(H, 0b0011) == {0b0011, 0b0101}


def test_aligned_coefficients_cover_union(q4_pauli):
    H0, H = q4_pauli
    strings, c0, c1 = aligned_coefficients(H0, H)
    assert {p.key for p in strings} == {p.key for p in H0.terms} | {p.key for p in H.terms}
    hop = next(k for k, p in enumerate(strings) if not p.is_diagonal())
    assert c0[hop] == 0.0 and c1[hop] == pytest.approx(-0.5)


def test_combine_endpoints(q4_pauli):
    H0, H = q4_pauli
    assert np.allclose(combine(H0, H, 0.0).to_dense(), H0.to_dense())
    assert np.allclose(combine(H0, H, 1.0).to_dense(), H.to_dense())
    half = combine(H0, H, 0.5)
    assert len(half) == len(aligned_coefficients(H0, H)[0])
    assert np.allclose(half.to_dense(), 0.5 * (H0.to_dense() + H.to_dense()))


def test_dump_format():
    H = PauliHamiltonian.from_terms(2, [PauliString(0b11, 0, 0.5), PauliString(0, 0b10, -0.25)])
    assert H.dump().splitlines() == ["-0.25 · I Z", "+0.5 · X X"]
