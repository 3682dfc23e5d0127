"""
Operator-string weights of the one-step diabatic propagator U(1, T) and of
the adiabatic propagator U_A(T) for H(tau) = H0 + (tau / T) H1.

Both expand into the same strings of H0 and H1. A string of length n
carries 1/n! in U(1, T); in U_A(T) it carries 1 / (g1 (g1 + g2) ...), with
g = 2 for H1 and 1 for H0, accumulated from the rightmost (first applied)
operator.
"""

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.integrate
import scipy.linalg
from loguru import logger

from cvqe.errors import CapacityError, DimensionMismatchError, SolverError

MAX_ENUMERATION_ORDER = 8
MAX_QUADRATURE_ORDER = 5
MAX_DENSE_DIMENSION = 16

H0_BIT = 0
H1_BIT = 1


@dataclass(frozen=True)
class OperatorPattern:
    """Operator string written left to right; bit 1 marks H1, bit 0 marks H0."""
    bits: Tuple[int, ...]

    def __post_init__(self):
        if any(b not in (H0_BIT, H1_BIT) for b in self.bits):
            raise ValueError(f"pattern bits must be 0 or 1, got {self.bits}")

    def __len__(self) -> int:
        return len(self.bits)

    @property
    def h1_count(self) -> int:
        return sum(self.bits)

    @property
    def tau_power(self) -> int:
        return len(self.bits) + self.h1_count

    @property
    def label(self) -> str:
        return "".join(f"H{b}" for b in self.bits) or "I"

    @classmethod
    def parse(cls, text: str) -> "OperatorPattern":
        """'H0H1H0' (spaces allowed) or 'I' for the empty string."""
        text = text.replace(" ", "").upper()
        if text in ("", "I"):
            return cls(())
        if len(text) % 2 or any(text[i] != "H" for i in range(0, len(text), 2)):
            raise ValueError(f"bad operator pattern {text!r}")
        return cls(tuple(int(text[i]) for i in range(1, len(text), 2)))

    def without(self, position: int) -> "OperatorPattern":
        return OperatorPattern(self.bits[:position] + self.bits[position + 1:])

    def product(self, h0: np.ndarray, h1: np.ndarray) -> np.ndarray:
        out = np.eye(h0.shape[0], dtype=np.complex128)
        for b in self.bits:
            out = out @ (h1 if b else h0)
        return out


def diabatic_weight(pattern: OperatorPattern) -> Fraction:
    return Fraction(1, math.factorial(len(pattern)))


def adiabatic_weight(pattern: OperatorPattern) -> Fraction:
    weight = Fraction(1)
    total = 0
    for b in reversed(pattern.bits):
        total += 2 if b else 1
        weight /= total
    return weight


@dataclass(frozen=True)
class WeightRow:
    pattern: OperatorPattern
    w: Fraction
    w_bar: Fraction
    tau_power: int


def enumerate_order(order: int) -> List[WeightRow]:
    """All 2^order patterns of one order, H0 before H1 lexicographically."""
    if order < 0:
        raise ValueError(f"order must be >= 0, got {order}")
    if order > MAX_ENUMERATION_ORDER:
        raise CapacityError(f"enumeration limited to order {MAX_ENUMERATION_ORDER}, got {order}")
    rows = []
    for bits in itertools.product((H0_BIT, H1_BIT), repeat=order):
        p = OperatorPattern(bits)
        rows.append(WeightRow(p, diabatic_weight(p), adiabatic_weight(p), p.tau_power))
    return rows


def weights_table(order: int, cumulative: bool = False) -> pd.DataFrame:
    """Weight table for one order (or every order up to it), rationals split into numerator/denominator."""
    orders = range(order + 1) if cumulative else [order]
    records = []
    for n in orders:
        for row in enumerate_order(n):
            records.append({
                "order": n,
                "pattern": row.pattern.label,
                "w_num": row.w.numerator,
                "w_den": row.w.denominator,
                "wbar_num": row.w_bar.numerator,
                "wbar_den": row.w_bar.denominator,
                "tau_power": row.tau_power,
            })
    return pd.DataFrame.from_records(
        records, columns=["order", "pattern", "w_num", "w_den", "wbar_num", "wbar_den", "tau_power"]
    )


def _pattern_integral(bits: Sequence[int], x: np.ndarray, nodes: np.ndarray, weights: np.ndarray, T: float) -> np.ndarray:
    """Nested integral of the scalar stand-ins (1 for H0, tau/T for H1) from 0 to x."""
    if not bits:
        return np.ones_like(x)
    t = x[..., None] * (nodes + 1.0) / 2.0
    w = x[..., None] * weights / 2.0
    f = t / T if bits[0] else np.ones_like(t)
    return np.sum(w * f * _pattern_integral(bits[1:], t, nodes, weights, T), axis=-1)


def pattern_coefficient_numeric(pattern: OperatorPattern, grid: int = 8) -> float:
    """Coefficient of the pattern in the nested-integral recursion at tau = T = 1."""
    nodes, weights = np.polynomial.legendre.leggauss(grid)
    return float(_pattern_integral(pattern.bits, np.array(1.0), nodes, weights, 1.0))


def verify_weights_numeric(order: int, grid: int = 8) -> float:
    """Largest |quadrature - adiabatic_weight| over the patterns of one order."""
    if order > MAX_QUADRATURE_ORDER:
        raise CapacityError(f"quadrature check limited to order {MAX_QUADRATURE_ORDER}, got {order}")
    deviation = 0.0
    for row in enumerate_order(order):
        numeric = pattern_coefficient_numeric(row.pattern, grid)
        deviation = max(deviation, abs(numeric - float(row.w_bar)))
    logger.debug(f"weights order {order}: max quadrature deviation {deviation:.3e} (grid {grid})")
    return deviation


def _check_pair(h0: np.ndarray, h1: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    h0 = np.asarray(h0, dtype=np.complex128)
    h1 = np.asarray(h1, dtype=np.complex128)
    if h0.shape != h1.shape or h0.ndim != 2 or h0.shape[0] != h0.shape[1]:
        raise DimensionMismatchError(f"H0 {h0.shape} and H1 {h1.shape} must be equal square matrices")
    if h0.shape[0] > MAX_DENSE_DIMENSION:
        raise CapacityError(f"dense series limited to dimension {MAX_DENSE_DIMENSION}, got {h0.shape[0]}")
    return h0, h1


def _operator_integral(order: int, x: np.ndarray, h0, h1, T, nodes, weights) -> np.ndarray:
    d = h0.shape[0]
    if order == 0:
        return np.broadcast_to(np.eye(d, dtype=np.complex128), x.shape + (d, d))
    t = x[..., None] * (nodes + 1.0) / 2.0
    w = x[..., None] * weights / 2.0
    h = h0 + (t / T)[..., None, None] * h1
    inner = _operator_integral(order - 1, t, h0, h1, T, nodes, weights)
    return np.sum(w[..., None, None] * (h @ inner), axis=-3)


def nested_integral_operator(h0: np.ndarray, h1: np.ndarray, T: float, order: int, nodes: int = 8) -> np.ndarray:
    """I_n(T) with I_0 = 1 and I_n(tau) = int_0^tau H(tau1) I_{n-1}(tau1) dtau1."""
    h0, h1 = _check_pair(h0, h1)
    if order > MAX_QUADRATURE_ORDER:
        raise CapacityError(f"operator quadrature limited to order {MAX_QUADRATURE_ORDER}, got {order}")
    if T == 0.0:
        if order == 0:
            return np.eye(h0.shape[0], dtype=np.complex128)
        return np.zeros_like(h0)
    u, w = np.polynomial.legendre.leggauss(nodes)
    return np.array(_operator_integral(order, np.array(float(T)), h0, h1, float(T), u, w))


def pattern_sum(h0: np.ndarray, h1: np.ndarray, T: float, order: int, adiabatic: bool = True) -> np.ndarray:
    """Sum over the order's patterns of weight * product * T^order."""
    h0, h1 = _check_pair(h0, h1)
    total = np.zeros_like(h0)
    for row in enumerate_order(order):
        weight = row.w_bar if adiabatic else row.w
        total += float(weight) * row.pattern.product(h0, h1)
    return total * T ** order


def truncated_series(h0: np.ndarray, h1: np.ndarray, T: float, order: int, adiabatic: bool) -> np.ndarray:
    """sum_{n <= order} (-i)^n pattern_sum(n)."""
    h0, h1 = _check_pair(h0, h1)
    out = np.zeros_like(h0)
    for n in range(order + 1):
        out += (-1j) ** n * pattern_sum(h0, h1, T, n, adiabatic)
    return out


def adiabatic_propagator(h0: np.ndarray, h1: np.ndarray, T: float, tol: float = 1e-12) -> np.ndarray:
    """Time-ordered U_A(T) for H(tau) = H0 + (tau / T) H1 by DOP853."""
    h0, h1 = _check_pair(h0, h1)
    d = h0.shape[0]
    if T == 0.0:
        return np.eye(d, dtype=np.complex128)

    def rhs(tau, y):
        u = y.reshape(d, d)
        return (-1j * (h0 + (tau / T) * h1) @ u).ravel()

    solution = scipy.integrate.solve_ivp(
        rhs, (0.0, T), np.eye(d, dtype=np.complex128).ravel(), method="DOP853", rtol=tol, atol=tol
    )
    if not solution.success:
        raise SolverError(f"propagator integration failed: {solution.message}")
    return solution.y[:, -1].reshape(d, d)


@dataclass(frozen=True)
class SeriesGap:
    order: int
    diabatic: float
    adiabatic: float


def compare_truncated_series(
    h0: np.ndarray,
    h1: np.ndarray,
    T: float,
    order: int,
    exact_adiabatic: Optional[np.ndarray] = None,
) -> SeriesGap:
    """
    Spectral-norm distance of each truncated series from its exact
    propagator: expm(-i (H0 + H1) T) for U(1, T), the integrated U_A(T)
    for the adiabatic one.
    """
    h0, h1 = _check_pair(h0, h1)
    exact = scipy.linalg.expm(-1j * (h0 + h1) * T)
    if exact_adiabatic is None:
        exact_adiabatic = adiabatic_propagator(h0, h1, T)
    gap_d = float(np.linalg.norm(truncated_series(h0, h1, T, order, adiabatic=False) - exact, ord=2))
    gap_a = float(np.linalg.norm(truncated_series(h0, h1, T, order, adiabatic=True) - exact_adiabatic, ord=2))
    return SeriesGap(order, gap_d, gap_a)
