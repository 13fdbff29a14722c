"""Teleportation-based estimate of the Pauli-averaged OTOC.

For probe sites 1 and ``j`` the averaged correlator is

    OTOC = 1/16 sum_{V, W in {I, X, Y, Z}} tr[W_j(t) V_1 W_j(t) V_1] / 2^n,
    W_j(t) = U^dag W_j U.

The circuit prepares Bell pairs, applies ``U`` to the A copy and ``conj(U)``
to the B copy, conditions on the Bell outcome at ``(A_j, B_j)`` and reads
``F_EPR`` off ``(A_0, B_0)``; noiselessly ``F_EPR = 1 / (4 OTOC)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from xy_butterfly.model import ModelParams, build_xy_hamiltonian, evolution_from_eigh, pauli_at
from xy_butterfly.rtr import GateSequence
from xy_butterfly.sim import (
    CNOT,
    HADAMARD,
    DegenerateConditioningError,
    NoiseSpec,
    a_qubit,
    apply_gates,
    apply_unitary_pair,
    b_qubit,
    bell_pairs,
    bell_projection_prob,
    bell_rotation,
    draw_errors,
    marginal_probs,
    physical_gate_list,
    prepare_yky_input,
    readout_channel,
    sample_bits,
)

MODES = ("exact", "sampled", "noisy")
SURFACE_HEADER = ["j", "t", "F_EPR", "otoc", "C", "mode", "shots", "ci"]
WILSON_Z = 1.96


@dataclass
class OtocRecord:
    j: int
    t: float
    F_EPR: float
    otoc: float
    C: float
    mode: str
    shots: int | None = None
    ci_halfwidth: float | None = None
    error: str | None = None

    def csv_row(self) -> list[str]:
        fmt = lambda v: "" if v is None else f"{v:.12g}"  # noqa: E731
        return [
            str(self.j),
            fmt(self.t),
            fmt(self.F_EPR),
            fmt(self.otoc),
            fmt(self.C),
            self.mode,
            "" if self.shots is None else str(self.shots),
            fmt(self.ci_halfwidth),
        ]


@dataclass
class ProtocolSpec:
    """One protocol run.

    ``evolution`` is a dense unitary or a compiled ``GateSequence``; when it
    is ``None`` the exact ``exp(-iHt)`` of ``params`` is used. In ``noisy``
    mode ``trajectories`` pure-state runs share the ``shots``; with
    ``shots=None`` the trajectory-averaged probabilities are used directly.
    """

    params: ModelParams
    j: int
    t: float = 0.0
    evolution: np.ndarray | GateSequence | None = None
    mode: str = "exact"
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    shots: int | None = None
    seed: int | None = 0
    trajectories: int = 100

    def __post_init__(self):
        if not 2 <= self.j <= self.params.n:
            raise ValueError(f"probe site j={self.j} must lie in 2..{self.params.n}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "sampled" and not self.shots:
            raise ValueError("sampled mode needs a positive shot count")
        if self.mode == "noisy" and self.trajectories < 1:
            raise ValueError("noisy mode needs at least one trajectory")

    def unitary_or_gates(self):
        if self.evolution is not None:
            return self.evolution
        H = build_xy_hamiltonian(self.params)
        return evolution_from_eigh(*np.linalg.eigh(H), self.t)


def averaged_otoc_oracle(U: np.ndarray, j: int) -> float:
    """Brute-force Pauli average of the OTOC at the maximally mixed state."""
    dim = U.shape[0]
    n = int(round(math.log2(dim)))
    if not 2 <= j <= n:
        raise ValueError(f"probe site j={j} must lie in 2..{n}")
    Udag = U.conj().T
    total = 0.0 + 0.0j
    for w in "IXYZ":
        Wt = Udag @ pauli_at(j, w, n) @ U
        for v in "IXYZ":
            V = pauli_at(1, v, n)
            total += np.trace(Wt @ V @ Wt @ V)
    total /= 16 * dim
    if abs(total.imag) > 1e-10:
        raise ArithmeticError(f"averaged OTOC has imaginary part {total.imag:.3g}")
    return float(total.real)


def squared_commutator(F_EPR: float) -> float:
    """``C = 2 - 1 / (2 F_EPR)``."""
    if not F_EPR > 0:
        raise ValueError(f"F_EPR must be positive, got {F_EPR}")
    return 2.0 - 1.0 / (2.0 * F_EPR)


def wilson_halfwidth(successes: int, trials: int, z: float = WILSON_Z) -> float:
    if trials == 0:
        return math.inf
    p = successes / trials
    denom = 1 + z**2 / trials
    return z * math.sqrt(p * (1 - p) / trials + z**2 / (4 * trials**2)) / denom


def _record(j, t, F, mode, shots=None, ci=None) -> OtocRecord:
    return OtocRecord(j, t, F, 1.0 / (4.0 * F), squared_commutator(F), mode, shots, ci)


def _measured_qubits(n, j):
    pair_j = (a_qubit(j, n), b_qubit(j, n))
    pair_0 = (a_qubit(0, n), b_qubit(0, n))
    return pair_j, pair_0


def _ratio_from_counts(counts4: np.ndarray):
    # outcome index bits: (A_j, B_j, A_0, B_0); "00" on a pair is Bell phi+
    cond = int(counts4[0b0000] + counts4[0b0001] + counts4[0b0010] + counts4[0b0011])
    both = int(counts4[0b0000])
    return both, cond


def _run_exact(spec: ProtocolSpec) -> OtocRecord:
    n, j = spec.params.n, spec.j
    state = apply_unitary_pair(prepare_yky_input(n), spec.unitary_or_gates())
    pair_j, pair_0 = _measured_qubits(n, j)
    p_cond = bell_projection_prob(state, *pair_j)
    if p_cond <= 1e-14:
        raise DegenerateConditioningError(f"P(A{j}B{j} = phi) = {p_cond:.3g}")
    _, post = bell_projection_prob(state, *pair_j, return_post=True)
    F = bell_projection_prob(post, *pair_0)
    return _record(j, spec.t, F, "exact")


def _run_sampled(spec: ProtocolSpec) -> OtocRecord:
    n, j = spec.params.n, spec.j
    rng = np.random.default_rng(spec.seed)
    state = apply_unitary_pair(prepare_yky_input(n), spec.unitary_or_gates())
    pair_j, pair_0 = _measured_qubits(n, j)
    psi = bell_rotation(state.amplitudes, [pair_j, pair_0], state.q)
    probs = marginal_probs(psi, [*pair_j, *pair_0], state.q)
    out = sample_bits(probs, spec.shots, spec.noise.p_read, rng)
    both, cond = _ratio_from_counts(np.bincount(out, minlength=16))
    if cond == 0:
        raise DegenerateConditioningError(f"no shot conditioned on A{j}B{j} = phi")
    return _record(j, spec.t, both / cond, "sampled", spec.shots, wilson_halfwidth(both, cond))


def _noisy_circuit(spec: ProtocolSpec):
    """Full gate list: Bell preparation, evolution, Bell-basis rotation."""
    n, j = spec.params.n, spec.j
    gates = []
    for a, b in bell_pairs(n):
        gates += [(HADAMARD, (a,)), (CNOT, (a, b))]
    evo = spec.unitary_or_gates()
    if isinstance(evo, GateSequence):
        gates += physical_gate_list(evo, n)
    else:
        gates.append((evo, tuple(a_qubit(s, n) for s in range(1, n + 1))))
        gates.append((evo.conj(), tuple(b_qubit(s, n) for s in range(1, n + 1))))
    for a, b in _measured_qubits(n, j):
        gates += [(CNOT, (a, b)), (HADAMARD, (a,))]
    return gates


def _trajectory_probs(spec: ProtocolSpec) -> np.ndarray:
    """Measured-bit distribution of each trajectory, one row per trajectory.

    Error-free trajectories are all identical and simulated once.
    """
    n, j = spec.params.n, spec.j
    q = 2 * n + 2
    gates = _noisy_circuit(spec)
    pair_j, pair_0 = _measured_qubits(n, j)
    measured = [*pair_j, *pair_0]
    n2 = sum(len(t) == 2 for _, t in gates)
    rng = np.random.default_rng(spec.seed)
    psi0 = np.zeros(2**q, dtype=complex)
    psi0[0] = 1.0
    clean = None
    out = []
    for _ in range(spec.trajectories):
        errors = draw_errors(n2, spec.noise.p2, rng)
        if np.all(errors < 0):
            if clean is None:
                clean = marginal_probs(apply_gates(psi0, gates, q), measured, q)
            out.append(clean)
        else:
            out.append(marginal_probs(apply_gates(psi0, gates, q, errors), measured, q))
    return np.array(out)


def _run_noisy(spec: ProtocolSpec) -> OtocRecord:
    probs = _trajectory_probs(spec)
    j = spec.j
    p_read = spec.noise.p_read
    if spec.shots is None:
        probs = np.array([readout_channel(p, p_read) for p in probs])
        both = probs[:, 0]
        cond = probs[:, 0:4].sum(axis=1)
        if cond.mean() <= 1e-14:
            raise DegenerateConditioningError(f"P(A{j}B{j} = phi) vanishes")
        F = both.mean() / cond.mean()
        # delta-method standard error of the ratio of trajectory means
        k = len(both)
        if k > 1:
            resid = both - F * cond
            se = math.sqrt(resid.var(ddof=1) / k) / cond.mean()
        else:
            se = math.inf
        return _record(j, spec.t, F, "noisy", None, WILSON_Z * se)
    rng = np.random.default_rng(None if spec.seed is None else spec.seed + 1)
    per = np.full(len(probs), spec.shots // len(probs))
    per[: spec.shots % len(probs)] += 1
    counts = np.zeros(16, dtype=np.int64)
    for p, s in zip(probs, per):
        if s:
            counts += np.bincount(sample_bits(p, int(s), p_read, rng), minlength=16)
    both, cond = _ratio_from_counts(counts)
    if cond == 0:
        raise DegenerateConditioningError(f"no shot conditioned on A{j}B{j} = phi")
    return _record(j, spec.t, both / cond, "noisy", spec.shots, wilson_halfwidth(both, cond))


def yky_run(spec: ProtocolSpec) -> OtocRecord:
    if spec.mode == "exact":
        return _run_exact(spec)
    if spec.mode == "sampled":
        return _run_sampled(spec)
    return _run_noisy(spec)


def _point_seed(seed, j, it):
    if seed is None:
        return None
    return int(np.random.SeedSequence([seed, j, it]).generate_state(1)[0])


def otoc_surface(
    params: ModelParams,
    j_list,
    t_grid,
    mode: str = "exact",
    compiler=None,
    noise: NoiseSpec | None = None,
    shots: int | None = None,
    seed: int | None = 0,
    trajectories: int = 100,
    stop_when_crossed: float | None = None,
) -> list[OtocRecord]:
    """Run the protocol for every ``(j, t)`` in the grid.

    ``compiler`` maps a time to a ``GateSequence``; without one the exact
    evolution is used, from a single eigendecomposition. A failing point is
    recorded with its error message and the sweep continues. With
    ``stop_when_crossed`` set, the sweep ends after the first time at which
    every ``j`` has reached that value of ``C``.
    """
    noise = NoiseSpec() if noise is None else noise
    j_list = list(j_list)
    for j in j_list:
        if not 2 <= j <= params.n:
            raise ValueError(f"probe site j={j} must lie in 2..{params.n}")
    eig = np.linalg.eigh(build_xy_hamiltonian(params)) if compiler is None else None
    crossed = set()
    records = []
    for it, t in enumerate(t_grid):
        t = float(t)
        try:
            evo = evolution_from_eigh(*eig, t) if compiler is None else compiler(t)
        except Exception as exc:  # a failed compile only loses this time slice
            evo = exc
        for j in j_list:
            if isinstance(evo, Exception):
                records.append(_failed(j, t, mode, shots, f"compilation failed: {evo}"))
                continue
            spec = ProtocolSpec(params, j, t, evo, mode, noise, shots, _point_seed(seed, j, it), trajectories)
            try:
                rec = yky_run(spec)
            except (DegenerateConditioningError, ValueError, ArithmeticError) as exc:
                rec = _failed(j, t, mode, shots, str(exc))
            records.append(rec)
            if stop_when_crossed is not None and rec.error is None and rec.C >= stop_when_crossed:
                crossed.add(j)
        if stop_when_crossed is not None and crossed >= set(j_list):
            break
    return records


def _failed(j, t, mode, shots, msg) -> OtocRecord:
    nan = float("nan")
    return OtocRecord(j, t, nan, nan, nan, mode, shots, None, msg)


def write_surface_csv(fh, records) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(SURFACE_HEADER + ["error"])
    for rec in records:
        writer.writerow(rec.csv_row() + [rec.error or ""])


def read_surface_csv(fh) -> list[OtocRecord]:
    out = []
    num = lambda s: None if s == "" else float(s)  # noqa: E731
    lines = (line for line in fh if not line.startswith("#"))
    for row in csv.DictReader(lines):
        shots = row["shots"]
        out.append(
            OtocRecord(
                int(row["j"]),
                float(row["t"]),
                float(row["F_EPR"]) if row["F_EPR"] else float("nan"),
                float(row["otoc"]) if row["otoc"] else float("nan"),
                float(row["C"]) if row["C"] else float("nan"),
                row["mode"],
                int(shots) if shots else None,
                num(row["ci"]),
                row.get("error") or None,
            )
        )
    return out
