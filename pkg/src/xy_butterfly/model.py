"""XY chain Hamiltonian, Pauli building blocks and exact time evolution.

Operators are dense ``numpy`` arrays of shape ``(2**n, 2**n)``. Site 1 is the
most significant bit of the computational-basis index, so the operator for
site ``s`` is ``I^(s-1) (x) P (x) I^(n-s)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10


@dataclass(frozen=True)
class ModelParams:
    """Couplings of ``H = J sum_j [(1+r)/2 XX + (1-r)/2 YY] + J h sum_j Z``."""

    J: float = 1.0
    r: float = 0.0
    h: float = 0.0
    n: int = 5
    boundary: str = "open"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"site count must be a positive integer, got {self.n!r}")
        if not all(np.isfinite([self.J, self.r, self.h])):
            raise ValueError("J, r, h must be finite")
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"boundary must be 'open' or 'periodic', got {self.boundary!r}")

    def bonds(self) -> list[tuple[int, int]]:
        """Nearest-neighbour bonds as 1-indexed site pairs."""
        pairs = [(j, j + 1) for j in range(1, self.n)]
        if self.boundary == "periodic" and self.n > 2:
            pairs.append((self.n, 1))
        return pairs


def is_hermitian(op: np.ndarray, atol: float = HERMITIAN_TOL) -> bool:
    return bool(np.max(np.abs(op - op.conj().T), initial=0.0) <= atol)


def unitarity_defect(op: np.ndarray) -> float:
    """``max |U^dag U - I|`` elementwise."""
    return float(np.max(np.abs(op.conj().T @ op - np.eye(op.shape[0]))))


def is_unitary(op: np.ndarray, atol: float = UNITARY_TOL) -> bool:
    return unitarity_defect(op) <= atol


def pauli_at(site: int, which: str, n: int) -> np.ndarray:
    """Pauli ``which`` on 1-indexed ``site`` of an ``n``-site register."""
    if not 1 <= site <= n:
        raise ValueError(f"site {site} out of range 1..{n}")
    try:
        p = PAULI[which]
    except KeyError:
        raise ValueError(f"unknown Pauli {which!r}") from None
    factors = [PAULI["I"]] * n
    factors[site - 1] = p
    return reduce(np.kron, factors)


def pauli_string(ops: dict[int, str], n: int) -> np.ndarray:
    """Tensor product with ``ops[site]`` on the listed sites, identity elsewhere."""
    factors = [PAULI[ops.get(s, "I")] for s in range(1, n + 1)]
    return reduce(np.kron, factors)


def build_xy_hamiltonian(params: ModelParams) -> np.ndarray:
    J, r, h, n = params.J, params.r, params.h, params.n
    H = np.zeros((2**n, 2**n), dtype=complex)
    for a, b in params.bonds():
        H += J * (1 + r) / 2 * pauli_string({a: "X", b: "X"}, n)
        H += J * (1 - r) / 2 * pauli_string({a: "Y", b: "Y"}, n)
    for s in range(1, n + 1):
        H += J * h * pauli_at(s, "Z", n)
    return H


def exact_evolution(H: np.ndarray, t: float) -> np.ndarray:
    """``exp(-i H t)`` through the Hermitian eigendecomposition of ``H``."""
    if not is_hermitian(H, atol=1e-10):
        raise ValueError("exact_evolution needs a Hermitian generator")
    evals, evecs = np.linalg.eigh(H)
    return evolution_from_eigh(evals, evecs, t)


def evolution_from_eigh(evals: np.ndarray, evecs: np.ndarray, t: float) -> np.ndarray:
    """Reuse one eigendecomposition across many times."""
    return (evecs * np.exp(-1j * evals * t)) @ evecs.conj().T
