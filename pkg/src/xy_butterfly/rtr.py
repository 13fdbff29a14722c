"""Brick-wall circuit compilation by Riemannian trust-region optimization.

The ansatz ``E(G_1, ..., G_m)`` applies layer ``l`` (1-indexed) as one
two-qubit gate ``G_l`` repeated on the pairs ``(1,2), (3,4), ...`` when ``l``
is odd and on ``(2,3), (4,5), ...`` when ``l`` is even. The cost is
``f(G) = ||E(G) - U||_F^2`` on the product manifold ``U(4)^m`` with the
embedded metric ``<A, B> = Re tr(A^dag B)`` and the QR retraction.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache, reduce

import numpy as np
from scipy.linalg import expm
from scipy.stats import unitary_group

from xy_butterfly.model import (
    PAULI,
    UNITARY_TOL,
    ModelParams,
    build_xy_hamiltonian,
    evolution_from_eigh,
)

_XX = np.kron(PAULI["X"], PAULI["X"])
_YY = np.kron(PAULI["Y"], PAULI["Y"])
_ZI = np.kron(PAULI["Z"], PAULI["I"])
_IZ = np.kron(PAULI["I"], PAULI["Z"])


class RetractionError(ArithmeticError):
    """``G + H`` is numerically singular, so the QR factor is undefined."""


@dataclass
class GateSequence:
    """``m`` two-qubit gates for an ``n``-qubit brick wall."""

    gates: np.ndarray  # shape (m, 4, 4)
    n: int

    def __post_init__(self):
        self.gates = np.asarray(self.gates, dtype=complex).reshape(-1, 4, 4)
        if self.n < 2:
            raise ValueError("brick-wall circuits need n >= 2")

    @property
    def m(self) -> int:
        return self.gates.shape[0]

    def is_unitary(self, atol: float = UNITARY_TOL) -> bool:
        eye = np.eye(4)
        return all(np.max(np.abs(g.conj().T @ g - eye)) <= atol for g in self.gates)

    def copy(self) -> GateSequence:
        return GateSequence(self.gates.copy(), self.n)

    def to_jsonable(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "gates": [[[[z.real, z.imag] for z in row] for row in g] for g in self.gates],
        }

    @classmethod
    def from_jsonable(cls, data: dict) -> GateSequence:
        arr = np.array(data["gates"], dtype=float)
        return cls(arr[..., 0] + 1j * arr[..., 1], int(data["n"]))


def layer_pairs(layer: int, n: int) -> list[tuple[int, int]]:
    """0-indexed qubit pairs touched by 0-indexed ``layer``."""
    start = layer % 2
    return [(q, q + 1) for q in range(start, n - 1, 2)]


def two_qubit_gate_list(seq: GateSequence) -> list[tuple[np.ndarray, tuple[int, int]]]:
    """Gates in application order with their 0-indexed target pairs."""
    return [(g, p) for l, g in enumerate(seq.gates) for p in layer_pairs(l, seq.n)]


def _kron(a, b):
    # np.kron is several times slower for these small dense factors
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(
        a.shape[0] * b.shape[0], a.shape[1] * b.shape[1]
    )


def _layer_matrix(gate: np.ndarray, layer: int, n: int) -> np.ndarray:
    start = layer % 2
    npairs = (n - start) // 2
    blocks = [gate] * npairs
    if start:
        blocks.insert(0, np.eye(2))
    if n - start - 2 * npairs:
        blocks.append(np.eye(2))
    return reduce(_kron, blocks)


def brickwall_expand(seq: GateSequence) -> np.ndarray:
    """Full ``2^n x 2^n`` unitary ``L_m ... L_1``."""
    E = np.eye(2**seq.n, dtype=complex)
    for l, g in enumerate(seq.gates):
        E = _layer_matrix(g, l, seq.n) @ E
    return E


def cost(seq: GateSequence, U: np.ndarray) -> float:
    """Squared Frobenius distance ``||E(G) - U||_F^2``."""
    if U.shape != (2**seq.n, 2**seq.n):
        raise ValueError(f"target has shape {U.shape}, circuit acts on {seq.n} qubits")
    return _cost_from_E(brickwall_expand(seq), U)


def _cost_from_E(E, U):
    d = E - U
    return float(np.real(np.vdot(d, d)))


def normalized_error(seq_or_E, U: np.ndarray) -> float:
    """``||E - U||_F / sqrt(2^n)``, between 0 and 2."""
    E = brickwall_expand(seq_or_E) if isinstance(seq_or_E, GateSequence) else seq_or_E
    return math.sqrt(_cost_from_E(E, U) / U.shape[0])


def phase_aligned_error(seq_or_E, U: np.ndarray) -> float:
    """``min_phi ||E - e^{i phi} U||_F / sqrt(2^n)``; diagnostic only."""
    E = brickwall_expand(seq_or_E) if isinstance(seq_or_E, GateSequence) else seq_or_E
    N = U.shape[0]
    return math.sqrt(max(0.0, 2 * N - 2 * abs(np.vdot(U, E))) / N)


# -- tangent-space geometry ---------------------------------------------------


def inner(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.real(np.vdot(a, b)))


def norm(a: np.ndarray) -> float:
    return math.sqrt(max(inner(a, a), 0.0))


def _herm(M):
    return (M + np.conj(np.swapaxes(M, -1, -2))) / 2


def project(gates: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """``Z - G herm(G^dag Z)`` per layer."""
    return Z - gates @ _herm(np.conj(np.swapaxes(gates, -1, -2)) @ Z)


def qf(A: np.ndarray) -> np.ndarray:
    """Unitary QR factor with the triangular factor's diagonal made positive."""
    Q, R = np.linalg.qr(A)
    d = np.diagonal(R, axis1=-2, axis2=-1)
    mag = np.abs(d)
    if np.any(mag < 1e-14):
        raise RetractionError("singular matrix in QR retraction")
    return Q * (d / mag)[..., None, :]


def qr_retraction(seq: GateSequence, H: np.ndarray) -> GateSequence:
    return GateSequence(qf(seq.gates + H), seq.n)


_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


@lru_cache(maxsize=None)
def _environment_plan(layer_parity: int, n: int, skip: int):
    """Reshape and einsum subscripts extracting position ``skip`` of a layer.

    The environment ``M`` is viewed with row and column axes
    ``(head, pair_0, ..., pair_{P-1}, tail)``; the result is
    ``sum prod_{q != skip} G[x_q, z_q] M[z-row, x-col]`` with the skipped
    pair left open as ``(row, col)``.
    """
    start = layer_parity
    npairs = (n - start) // 2
    tail = n - start - 2 * npairs
    letters = iter(_LETTERS)
    row, col, gate_terms = [], [], []
    shape = []
    if start:
        s = next(letters)
        row.append(s)
        col.append(s)
        shape.append(2)
    for p in range(npairs):
        shape.append(4)
        if p == skip:
            out_r, out_c = next(letters), next(letters)
            row.append(out_r)
            col.append(out_c)
        else:
            x, z = next(letters), next(letters)
            row.append(z)
            col.append(x)
            gate_terms.append(x + z)
    if tail:
        s = next(letters)
        row.append(s)
        col.append(s)
        shape.append(2)
    subs = ",".join(gate_terms + ["".join(row) + "".join(col)]) + "->" + out_r + out_c
    return tuple(shape + shape), subs, len(gate_terms)


def euclidean_gradient(seq: GateSequence, U: np.ndarray) -> np.ndarray:
    """Gradient of ``f`` with respect to each ``G_l`` in the real embedding.

    Writing ``f = 2N - 2 Re tr(U^dag E)`` and ``E = A L_l B``, the layer
    environment is ``M = B U^dag A``. Each position ``p`` of the layer
    contributes ``T_p = tr_rest(R_p M)`` with ``R_p`` the layer minus
    position ``p``; the gradient is ``-2 sum_p T_p^dag``.
    """
    n, m = seq.n, seq.m
    layers = [_layer_matrix(g, l, n) for l, g in enumerate(seq.gates)]
    before = [np.eye(2**n, dtype=complex)]
    for L in layers[:-1]:
        before.append(L @ before[-1])
    W = U.conj().T
    grad = np.zeros_like(seq.gates)
    for l in range(m - 1, -1, -1):
        M = before[l] @ W
        g = seq.gates[l]
        for p in range(len(layer_pairs(l, n))):
            shape, subs, ng = _environment_plan(l % 2, n, p)
            T = np.einsum(subs, *([g] * ng), M.reshape(shape))
            grad[l] -= 2 * T.conj().T
        W = W @ layers[l]
    return grad


def riemannian_gradient(seq: GateSequence, U: np.ndarray) -> np.ndarray:
    return project(seq.gates, euclidean_gradient(seq, U))


def hessian_vector(seq: GateSequence, U: np.ndarray, eta: np.ndarray, grad=None) -> np.ndarray:
    """Finite-difference Riemannian Hessian applied to ``eta``.

    Moves a distance ``1e-5 (1 + ||G||)`` along ``eta`` with the retraction,
    projects the new gradient back onto the tangent space at ``G`` and
    differences; the result is scaled back by linearity.
    """
    nrm = norm(eta)
    if nrm == 0.0:
        return np.zeros_like(eta)
    if grad is None:
        grad = riemannian_gradient(seq, U)
    step = 1e-5 * (1 + norm(seq.gates))
    moved = qr_retraction(seq, eta * (step / nrm))
    g_new = project(seq.gates, riemannian_gradient(moved, U))
    return project(seq.gates, (g_new - grad) * (nrm / step))


# -- trust-region machinery -----------------------------------------------------


@dataclass
class TrustRegionConfig:
    delta0: float | None = None  # default 0.1 sqrt(m)
    delta_max: float | None = None  # default sqrt(m)
    rho_accept: float = 0.1
    rho_expand: float = 0.75
    max_iters: int = 500
    grad_tol: float = 1e-8
    delta_min: float = 1e-14
    max_inner: int | None = None  # default: manifold dimension 16 m
    kappa: float = 0.1
    theta: float = 1.0
    error_tol: float = 1e-8  # stop once ||E - U||_F / sqrt(2^n) is below this
    stall_window: int = 10
    stall_rtol: float = 0.2  # stop if the last window of accepted steps gained less
    stall_below: float = 1e-4  # ... but only once the normalized error is this small
    restarts: int = 8
    init_scale: float = 0.01
    init: str = "mixed"  # "identity", "haar", or "mixed": first near identity, rest Haar

    def __post_init__(self):
        if not 0 < self.rho_accept < self.rho_expand < 1:
            raise ValueError("need 0 < rho_accept < rho_expand < 1")
        if self.init not in ("identity", "haar", "mixed"):
            raise ValueError(f"unknown init scheme {self.init!r}")
        if self.delta0 is not None and self.delta_max is not None:
            if not 0 < self.delta0 <= self.delta_max:
                raise ValueError("need 0 < delta0 <= delta_max")

    def radii(self, m: int) -> tuple[float, float]:
        d0 = 0.1 * math.sqrt(m) if self.delta0 is None else self.delta0
        dmax = math.sqrt(m) if self.delta_max is None else self.delta_max
        return d0, dmax


def model_value(f0: float, grad: np.ndarray, eta: np.ndarray, Heta: np.ndarray) -> float:
    return f0 + inner(grad, eta) + 0.5 * inner(eta, Heta)


def _boundary_tau(eta, d, delta, e_d=None, d_d=None, e_e=None):
    e_d = inner(eta, d) if e_d is None else e_d
    d_d = inner(d, d) if d_d is None else d_d
    e_e = inner(eta, eta) if e_e is None else e_e
    return (-e_d + math.sqrt(max(e_d**2 + d_d * (delta**2 - e_e), 0.0))) / d_d


def truncated_cg(grad, hess, delta, *, kappa=0.1, theta=1.0, max_inner=None):
    """Steihaug-Toint truncated CG for ``min <g, eta> + 1/2 <eta, H eta>``.

    ``hess`` is a callable returning the Hessian applied to a tangent vector.
    Returns ``(eta, H eta)``. The result is never worse on the model than the
    Cauchy point, and ``||eta|| <= delta``.
    """
    gnorm = norm(grad)
    eta = np.zeros_like(grad)
    Heta = np.zeros_like(grad)
    if gnorm == 0.0:
        return eta, Heta
    max_inner = grad.size * 2 if max_inner is None else max_inner
    tol = kappa * min(gnorm, gnorm ** (1 + theta))

    r = grad.copy()
    d = -r
    r_r = inner(r, r)
    e_e, e_d, d_d = 0.0, 0.0, r_r
    Hg = None
    for j in range(max_inner):
        Hd = hess(d)
        if j == 0:
            Hg = -Hd
        d_Hd = inner(d, Hd)
        alpha = r_r / d_Hd if d_Hd > 0 else math.inf
        e_e_new = e_e + 2 * alpha * e_d + alpha**2 * d_d
        if d_Hd <= 0 or e_e_new >= delta**2:
            tau = _boundary_tau(eta, d, delta, e_d, d_d, e_e)
            eta = eta + tau * d
            Heta = Heta + tau * Hd
            break
        eta = eta + alpha * d
        Heta = Heta + alpha * Hd
        e_e = e_e_new
        r = r + alpha * Hd
        r_r_new = inner(r, r)
        if math.sqrt(r_r_new) <= tol:
            break
        beta = r_r_new / r_r
        r_r = r_r_new
        e_d = beta * (e_d + alpha * d_d)
        d_d = r_r + beta**2 * d_d
        d = -r + beta * d

    # guard against the finite-difference Hessian spoiling the CG monotonicity
    eta_c, Heta_c = cauchy_point(grad, Hg, delta)
    if model_value(0.0, grad, eta_c, Heta_c) < model_value(0.0, grad, eta, Heta):
        return eta_c, Heta_c
    return eta, Heta


def cauchy_point(grad, Hg, delta):
    """Minimizer of the model along ``-grad`` inside the trust region."""
    gnorm = norm(grad)
    if gnorm == 0.0:
        return np.zeros_like(grad), np.zeros_like(grad)
    gHg = inner(grad, Hg)
    tau = 1.0 if gHg <= 0 else min(gnorm**3 / (delta * gHg), 1.0)
    s = -tau * delta / gnorm
    return s * grad, s * Hg


def solve_subproblem(seq: GateSequence, U: np.ndarray, delta: float, cfg=None, grad=None):
    """Approximate trust-region step at ``seq``; returns ``(eta, H eta)``."""
    if delta <= 0:
        raise ValueError("trust-region radius must be positive")
    cfg = TrustRegionConfig() if cfg is None else cfg
    if grad is None:
        grad = riemannian_gradient(seq, U)
    return truncated_cg(
        grad,
        lambda v: hessian_vector(seq, U, v, grad=grad),
        delta,
        kappa=cfg.kappa,
        theta=cfg.theta,
        max_inner=cfg.max_inner if cfg.max_inner is not None else 16 * seq.m,
    )


@dataclass
class CompilationResult:
    gates: GateSequence
    cost_history: list[float]
    final_error: float
    iterations: int
    converged: bool
    phase_aligned_error: float = float("nan")
    seed: int | None = None
    config: TrustRegionConfig = field(default_factory=TrustRegionConfig)
    restart_errors: list[float] = field(default_factory=list)

    def to_json(self) -> str:
        data = {
            "gates": self.gates.to_jsonable(),
            "cost_history": self.cost_history,
            "final_error": self.final_error,
            "phase_aligned_error": self.phase_aligned_error,
            "iterations": self.iterations,
            "converged": self.converged,
            "seed": self.seed,
            "restart_errors": self.restart_errors,
            "config": asdict(self.config),
        }
        return json.dumps(data, indent=1)


def random_near_identity(m: int, n: int, rng: np.random.Generator, scale: float = 0.01):
    noise = rng.standard_normal((m, 4, 4)) + 1j * rng.standard_normal((m, 4, 4))
    return GateSequence(qf(np.eye(4) + scale * noise), n)


def random_haar(m: int, n: int, rng: np.random.Generator) -> GateSequence:
    return GateSequence(unitary_group.rvs(4, size=m, random_state=rng).reshape(m, 4, 4), n)


def _rtr_single(U, x: GateSequence, cfg: TrustRegionConfig):
    d0, dmax = cfg.radii(x.m)
    delta = d0
    fx = cost(x, U)
    grad = riemannian_gradient(x, U)
    history = [fx]
    converged = False
    iters = 0
    reg = 1e3 * np.finfo(float).eps
    f_floor = cfg.error_tol**2 * U.shape[0]
    while iters < cfg.max_iters:
        if norm(grad) <= cfg.grad_tol or fx <= f_floor:
            converged = True
            break
        w = cfg.stall_window
        stalled = len(history) > w and history[-w - 1] - fx < cfg.stall_rtol * fx
        if stalled and fx <= cfg.stall_below**2 * U.shape[0]:
            break
        iters += 1
        eta, Heta = solve_subproblem(x, U, delta, cfg, grad=grad)
        predicted = -(inner(grad, eta) + 0.5 * inner(eta, Heta))
        try:
            x_new = qr_retraction(x, eta)
        except RetractionError:
            delta /= 4
            continue
        f_new = cost(x_new, U)
        scale = reg * max(1.0, fx)
        rho = (fx - f_new + scale) / (predicted + scale) if predicted > 0 else -math.inf
        if rho < cfg.rho_accept or f_new > fx:
            delta /= 4
        else:
            x, fx = x_new, f_new
            grad = riemannian_gradient(x, U)
            history.append(fx)
            if rho > cfg.rho_expand and abs(norm(eta) - delta) <= 1e-8 * delta:
                delta = min(2 * delta, dmax)
        if delta < cfg.delta_min:
            break
    if norm(grad) <= cfg.grad_tol or fx <= f_floor:
        converged = True
    return x, history, iters, converged


def rtr_compile(
    U: np.ndarray,
    m: int,
    cfg: TrustRegionConfig | None = None,
    seed: int = 0,
    init: GateSequence | list[GateSequence] | None = None,
) -> CompilationResult:
    """Compile ``U`` into an ``m``-layer brick wall; best of ``cfg.restarts`` runs.

    Gate sequences passed in ``init`` are tried first. Random restarts use
    seeds spawned from ``seed``; their starting points follow ``cfg.init``.
    Restarts stop early once one reaches ``cfg.error_tol``.
    """
    if m < 1:
        raise ValueError("need at least one layer")
    cfg = TrustRegionConfig() if cfg is None else cfg
    n = int(round(math.log2(U.shape[0])))
    if 2**n != U.shape[0] or U.shape[0] != U.shape[1]:
        raise ValueError(f"target shape {U.shape} is not a square power of two")
    if cfg.restarts < 1 and init is None:
        raise ValueError("need at least one random restart or an initial sequence")
    starts = []
    if init is not None:
        extra = [init] if isinstance(init, GateSequence) else list(init)
        for g in extra:
            if g.m != m or g.n != n:
                raise ValueError("initial gate sequence does not match (m, n)")
        starts.extend(g.copy() for g in extra)
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(cfg.restarts)):
        rng = np.random.default_rng(child)
        if cfg.init == "identity" or (cfg.init == "mixed" and i == 0):
            starts.append(random_near_identity(m, n, rng, cfg.init_scale))
        else:
            starts.append(random_haar(m, n, rng))

    best = None
    errors = []
    for x0 in starts:
        x, history, iters, converged = _rtr_single(U, x0, cfg)
        errors.append(math.sqrt(history[-1] / U.shape[0]))
        if best is None or history[-1] < best[1][-1]:
            best = (x, history, iters, converged)
        if best[1][-1] <= cfg.error_tol**2 * U.shape[0]:
            break
    x, history, iters, converged = best
    E = brickwall_expand(x)
    return CompilationResult(
        gates=x,
        cost_history=history,
        final_error=normalized_error(E, U),
        iterations=iters,
        converged=converged,
        phase_aligned_error=phase_aligned_error(E, U),
        seed=seed,
        config=cfg,
        restart_errors=errors,
    )


# -- product-formula baseline ---------------------------------------------------


def bond_generator(params: ModelParams, field_weight: float = 0.5) -> np.ndarray:
    """Two-site term: the bond plus ``field_weight`` of the field on both sites."""
    J, r, h = params.J, params.r, params.h
    return J * ((1 + r) / 2 * _XX + (1 - r) / 2 * _YY + field_weight * h * (_ZI + _IZ))


def trotter_compile(params: ModelParams, t: float, layers: int) -> GateSequence:
    """First-order Lie-Trotter brick wall with ``layers`` layers.

    An even layer count gives ``layers / 2`` steps of (odd bonds, even bonds)
    with ``dt = t / steps``. An odd count ``2s + 1`` (``s >= 1``) puts half
    steps on the first and last odd layers; a single layer evolves the odd
    bonds for the full time.

    With even ``n`` the odd layer touches every site once and carries the
    whole field. With odd ``n`` no shared-gate split is uniform; each layer
    carries half the field, so the two end sites see half of it.
    """
    if layers < 1:
        raise ValueError("need at least one layer")
    w_odd = 1.0 if params.n % 2 == 0 else 0.5
    gens = (bond_generator(params, w_odd), bond_generator(params, 1.0 - w_odd))
    gate = lambda layer, tau: expm(-1j * tau * gens[layer % 2])  # noqa: E731
    if layers % 2 == 0:
        taus = [t / (layers // 2)] * layers
    elif layers == 1:
        taus = [t]
    else:
        dt = t / (layers // 2)
        taus = [dt / 2] + [dt] * (layers - 2) + [dt / 2]
    return GateSequence(np.array([gate(l, tau) for l, tau in enumerate(taus)]), params.n)


# -- per-time compilers for OTOC surfaces ----------------------------------------


class RtrTimeCompiler:
    """Compile ``exp(-iHt)`` for a sequence of times, warm-starting each from the last.

    The first call uses ``cfg.restarts`` random starts; later calls add the
    previous solution as a start and use ``warm_restarts`` random ones.
    """

    def __init__(self, params: ModelParams, m: int, cfg: TrustRegionConfig | None = None,
                 seed: int = 0, warm_restarts: int = 0):
        self.params = params
        self.m = m
        self.cfg = TrustRegionConfig() if cfg is None else cfg
        self.seed = seed
        self.warm_restarts = warm_restarts
        self._eigh = np.linalg.eigh(build_xy_hamiltonian(params))
        self._prev: GateSequence | None = None
        self.results: dict[float, CompilationResult] = {}

    def __call__(self, t: float) -> GateSequence:
        if t in self.results:
            return self.results[t].gates
        U = evolution_from_eigh(*self._eigh, t)
        cfg = self.cfg
        if self._prev is not None:
            cfg = replace(cfg, restarts=self.warm_restarts)
        res = rtr_compile(U, self.m, cfg, seed=self.seed, init=self._prev)
        self._prev = res.gates
        self.results[t] = res
        return res.gates


class TrotterTimeCompiler:
    def __init__(self, params: ModelParams, layers: int):
        self.params = params
        self.layers = layers

    def __call__(self, t: float) -> GateSequence:
        return trotter_compile(self.params, t, self.layers)
