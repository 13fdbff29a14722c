"""Statevector simulator for the doubled-register teleportation circuit.

The register for an ``n``-site chain has ``q = 2n + 2`` qubits ordered
top to bottom as ``A0, A1, ..., An, Bn, ..., B1, B0``; qubit 0 is the most
significant bit of the amplitude index. ``B_s`` carries the conjugate copy of
site ``s``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from xy_butterfly.model import PAULI
from xy_butterfly.rtr import GateSequence, two_qubit_gate_list

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
CNOT = np.eye(4, dtype=complex)[[0, 1, 3, 2]]
BELL_PHI = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)
GATE_UNITARITY_TOL = 1e-8
NORM_TOL = 1e-10

_TWO_QUBIT_PAULIS = [
    np.kron(PAULI[a], PAULI[b]) for a in "IXYZ" for b in "IXYZ" if (a, b) != ("I", "I")
]


class DegenerateConditioningError(ValueError):
    """The conditioning event has (numerically) zero probability."""


def register_labels(n: int) -> list[str]:
    return ["A0"] + [f"A{s}" for s in range(1, n + 1)] + [f"B{s}" for s in range(n, 0, -1)] + ["B0"]


def a_qubit(site: int, n: int) -> int:
    return site


def b_qubit(site: int, n: int) -> int:
    return 2 * n + 1 - site


@dataclass
class StateVector:
    amplitudes: np.ndarray
    n: int  # physics sites; the register holds 2n + 2 qubits

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if self.amplitudes.size != 2**self.q:
            raise ValueError(f"need 2**{self.q} amplitudes, got {self.amplitudes.size}")
        labels = self.labels
        index = {lab: i for i, lab in enumerate(labels)}
        assert len(index) == self.q and all(labels[i] == lab for lab, i in index.items())

    @property
    def q(self) -> int:
        return 2 * self.n + 2

    @property
    def labels(self) -> list[str]:
        return register_labels(self.n)

    def index_of(self, label: str) -> int:
        return self.labels.index(label)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> StateVector:
        return StateVector(self.amplitudes.copy(), self.n)


@dataclass(frozen=True)
class NoiseSpec:
    p2: float = 0.0
    p_read: float = 0.0

    def __post_init__(self):
        for name in ("p2", "p_read"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @property
    def noiseless(self) -> bool:
        return self.p2 == 0.0 and self.p_read == 0.0


# -- kernels on raw amplitude arrays ------------------------------------------


def _apply(psi: np.ndarray, gate: np.ndarray, targets, q: int) -> np.ndarray:
    k = len(targets)
    t = np.moveaxis(psi.reshape((2,) * q), targets, range(k))
    shape = t.shape
    t = (gate @ t.reshape(2**k, -1)).reshape(shape)
    return np.moveaxis(t, range(k), targets).reshape(-1)


def _check_gate(gate: np.ndarray, targets, q: int) -> None:
    k = len(targets)
    if gate.shape != (2**k, 2**k):
        raise ValueError(f"gate of shape {gate.shape} does not act on {k} qubits")
    if len(set(targets)) != k or not all(0 <= t < q for t in targets):
        raise ValueError(f"bad targets {targets} for {q} qubits")
    if np.max(np.abs(gate.conj().T @ gate - np.eye(2**k))) > GATE_UNITARITY_TOL:
        raise ValueError("gate is not unitary")


def apply_gate(state: StateVector, gate: np.ndarray, targets) -> StateVector:
    """New state with ``gate`` applied; ``targets[0]`` is the gate's high bit."""
    gate = np.asarray(gate, dtype=complex)
    targets = tuple(int(t) for t in targets)
    _check_gate(gate, targets, state.q)
    return StateVector(_apply(state.amplitudes, gate, targets, state.q), state.n)


def prepare_yky_input(n: int) -> StateVector:
    """Bell pairs on (A0, A1), (B1, B0) and (Ak, Bk) for k = 2..n via H + CNOT."""
    if n < 2:
        raise ValueError("the protocol needs n >= 2 so that sites 1 and j differ")
    q = 2 * n + 2
    psi = np.zeros(2**q, dtype=complex)
    psi[0] = 1.0
    for a, b in bell_pairs(n):
        psi = _apply(psi, HADAMARD, (a,), q)
        psi = _apply(psi, CNOT, (a, b), q)
    return StateVector(psi, n)


def bell_pairs(n: int) -> list[tuple[int, int]]:
    pairs = [(0, 1), (b_qubit(1, n), b_qubit(0, n))]
    pairs += [(a_qubit(k, n), b_qubit(k, n)) for k in range(2, n + 1)]
    return pairs


def physical_gate_list(evolution, n: int, conjugate_copy: bool = True):
    """Two-qubit gates realizing ``U`` on A and ``U*`` on B, in order.

    ``evolution`` is a ``GateSequence``; sequence qubit ``s - 1`` is site ``s``.
    """
    out = []
    for g, (s0, s1) in two_qubit_gate_list(evolution):
        out.append((g, (a_qubit(s0 + 1, n), a_qubit(s1 + 1, n))))
    if conjugate_copy:
        for g, (s0, s1) in two_qubit_gate_list(evolution):
            out.append((g.conj(), (b_qubit(s0 + 1, n), b_qubit(s1 + 1, n))))
    return out


def apply_unitary_pair(state: StateVector, U, conjugate_copy: bool = True) -> StateVector:
    """``U`` on ``A1..An`` and, optionally, ``conj(U)`` on ``B1..Bn``.

    ``U`` is either a dense ``2^n x 2^n`` matrix (site 1 = high bit) or a
    compiled ``GateSequence`` applied gate by gate.
    """
    n = state.n
    if isinstance(U, GateSequence):
        if U.n != n:
            raise ValueError(f"sequence acts on {U.n} sites, register holds {n}")
        psi = state.amplitudes
        for g, targets in physical_gate_list(U, n, conjugate_copy):
            psi = _apply(psi, g, targets, state.q)
        return StateVector(psi, n)
    U = np.asarray(U, dtype=complex)
    if U.shape != (2**n, 2**n):
        raise ValueError(f"unitary of shape {U.shape} does not match n = {n}")
    a_targets = tuple(a_qubit(s, n) for s in range(1, n + 1))
    b_targets = tuple(b_qubit(s, n) for s in range(1, n + 1))
    psi = _apply(state.amplitudes, U, a_targets, state.q)
    if conjugate_copy:
        psi = _apply(psi, U.conj(), b_targets, state.q)
    return StateVector(psi, n)


def _bell_amplitude(psi, qa, qb, q):
    t = np.moveaxis(psi.reshape((2,) * q), (qa, qb), (0, 1)).reshape(4, -1)
    return BELL_PHI.conj() @ t


def bell_projection_prob(state: StateVector, qa: int, qb: int, return_post: bool = False):
    """Probability of ``(|00> + |11>)/sqrt(2)`` on qubits ``(qa, qb)``.

    With ``return_post`` the normalized projected state is returned as well.
    """
    if qa == qb:
        raise ValueError("Bell projection needs two distinct qubits")
    q = state.q
    amp = _bell_amplitude(state.amplitudes, qa, qb, q)
    p = float(np.real(np.vdot(amp, amp)))
    if not return_post:
        return p
    if p <= 1e-14:
        raise DegenerateConditioningError(f"projection probability {p:.3g} too small")
    post = np.outer(BELL_PHI, amp / math.sqrt(p)).reshape((2, 2) + (2,) * (q - 2))
    post = np.moveaxis(post, (0, 1), (qa, qb)).reshape(-1)
    return p, StateVector(post, state.n)


def bell_rotation(psi: np.ndarray, pairs, q: int) -> np.ndarray:
    """CNOT then H on the first qubit: maps the Bell basis to computational."""
    for a, b in pairs:
        psi = _apply(psi, CNOT, (a, b), q)
        psi = _apply(psi, HADAMARD, (a,), q)
    return psi


def marginal_probs(psi: np.ndarray, qubits, q: int) -> np.ndarray:
    """Distribution over the listed qubits; index bit 0 is ``qubits[0]``."""
    probs = np.abs(psi.reshape((2,) * q)) ** 2
    rest = tuple(i for i in range(q) if i not in qubits)
    marg = probs.sum(axis=rest)
    # sum keeps the remaining axes in increasing order; reorder to ``qubits``
    order = np.argsort(np.argsort(qubits))
    return np.transpose(marg, order).reshape(-1)


def readout_channel(probs: np.ndarray, p_read: float) -> np.ndarray:
    """Apply independent bit flips with probability ``p_read`` to a distribution."""
    if p_read == 0.0:
        return probs
    k = int(round(math.log2(probs.size)))
    flip = np.array([[1 - p_read, p_read], [p_read, 1 - p_read]])
    t = probs.reshape((2,) * k)
    for ax in range(k):
        t = np.moveaxis(np.tensordot(flip, t, axes=([1], [ax])), 0, ax)
    return t.reshape(-1)


def sample_bits(probs: np.ndarray, shots: int, p_read: float, rng) -> np.ndarray:
    """Outcome indices drawn from ``probs`` with readout flips applied per bit."""
    k = int(round(math.log2(probs.size)))
    p = np.clip(probs, 0.0, None)
    outcomes = rng.choice(probs.size, size=shots, p=p / p.sum())
    if p_read > 0.0:
        flips = rng.random((shots, k)) < p_read
        masks = (flips * (1 << np.arange(k - 1, -1, -1))).sum(axis=1)
        outcomes = outcomes ^ masks
    return outcomes


def _to_counts(outcomes: np.ndarray, k: int) -> dict[str, int]:
    values, counts = np.unique(outcomes, return_counts=True)
    return {format(int(v), f"0{k}b"): int(c) for v, c in zip(values, counts)}


def sample_counts(
    state: StateVector, measured_pairs, shots: int, noise: NoiseSpec | None = None, seed=None
) -> dict[str, int]:
    """Bell-basis measurement of each listed pair, sampled ``shots`` times.

    Bitstrings concatenate the two readout bits of each pair in the listed
    order; ``"00"`` on a pair is the ``(|00> + |11>)/sqrt(2)`` outcome.
    """
    if shots < 1:
        raise ValueError("need at least one shot")
    noise = NoiseSpec() if noise is None else noise
    rng = np.random.default_rng(seed)
    psi = bell_rotation(state.amplitudes, measured_pairs, state.q)
    qubits = [x for pair in measured_pairs for x in pair]
    probs = marginal_probs(psi, qubits, state.q)
    return _to_counts(sample_bits(probs, shots, noise.p_read, rng), len(qubits))


def counts_to_json(counts: dict[str, int], shots: int, seed, noise: NoiseSpec) -> str:
    return json.dumps(
        {"counts": counts, "shots": shots, "seed": seed, "noise": asdict(noise)}, indent=1
    )


def counts_from_json(text: str) -> tuple[dict[str, int], dict]:
    data = json.loads(text)
    return {k: int(v) for k, v in data["counts"].items()}, data


def draw_errors(n_two_qubit: int, p2: float, rng) -> np.ndarray:
    """Depolarizing pattern: per two-qubit gate, -1 for no error or the index
    of the non-identity Pauli inserted after it."""
    hits = rng.random(n_two_qubit) < p2
    paulis = rng.integers(15, size=n_two_qubit)
    return np.where(hits, paulis, -1)


def apply_gates(psi: np.ndarray, gates, q: int, errors=None) -> np.ndarray:
    """Apply ``(gate, targets)`` pairs, inserting Paulis after two-qubit gates
    according to ``errors`` (see ``draw_errors``)."""
    k = 0
    for g, targets in gates:
        psi = _apply(psi, g, targets, q)
        if len(targets) == 2:
            if errors is not None and errors[k] >= 0:
                psi = _apply(psi, _TWO_QUBIT_PAULIS[errors[k]], targets, q)
            k += 1
    return psi


def apply_noisy_sequence(
    state: StateVector, gates: GateSequence, noise: NoiseSpec, seed=None, conjugate_copy=True
) -> StateVector:
    """One depolarizing trajectory of the compiled ``U (x) U*``.

    After each two-qubit gate a uniformly random non-identity two-qubit Pauli
    hits its targets with probability ``noise.p2``.
    """
    glist = physical_gate_list(gates, state.n, conjugate_copy)
    errors = draw_errors(len(glist), noise.p2, np.random.default_rng(seed))
    return StateVector(apply_gates(state.amplitudes, glist, state.q, errors), state.n)


def shots_for_precision(eps: float, delta: float = 0.05) -> int:
    """Hoeffding shot count: a frequency lands within ``eps`` of its
    probability with confidence ``1 - delta``. Grows as ``eps**-2``."""
    if not 0 < eps < 1 or not 0 < delta < 1:
        raise ValueError("need 0 < eps < 1 and 0 < delta < 1")
    return math.ceil(math.log(2 / delta) / (2 * eps**2))
