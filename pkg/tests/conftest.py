import os
import tempfile
from pathlib import Path

import numpy as np
import pytest

# The service reads its settings at import time
_LEDGER_DIR = tempfile.mkdtemp(prefix="cvqe-tests-")
os.environ.setdefault("CVQE_DATABASE_URL", f"sqlite+aiosqlite:///{_LEDGER_DIR}/ledger.db")
os.environ.setdefault("CVQE_DEFAULT_OUTPUT_PATH", str(Path(_LEDGER_DIR) / "runs"))

from cvqe.fermion import ChainModel  # noqa: E402
from cvqe.pauli import PauliHamiltonian, PauliString, jordan_wigner  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


def random_pauli_sum(Q: int, n_terms: int, rng: np.random.Generator) -> PauliHamiltonian:
    """Hermitian sum of random non-identity strings with real coefficients."""
    terms = []
    while len(terms) < n_terms:
        x = int(rng.integers(0, 1 << Q))
        z = int(rng.integers(0, 1 << Q))
        if x | z:
            terms.append(PauliString(x, z, float(rng.normal())))
    return PauliHamiltonian.from_terms(Q, terms)


def kron_string(p: PauliString, Q: int) -> np.ndarray:
    """Dense unit-coefficient string with qubit 0 as the least significant factor."""
    single = {
        "I": np.eye(2),
        "X": np.array([[0, 1], [1, 0]], dtype=complex),
        "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
        "Z": np.diag([1.0, -1.0]).astype(complex),
    }
    out = np.eye(1, dtype=complex)
    for q in reversed(range(Q)):
        out = np.kron(out, single[p.letter(q)])
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def q4_model():
    return ChainModel(4, 2)


@pytest.fixture
def q8_model():
    return ChainModel(8, 4)


@pytest.fixture
def q4_pauli(q4_model):
    return jordan_wigner(q4_model.initial_hamiltonian()), jordan_wigner(q4_model.hamiltonian())


def write_config(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path
