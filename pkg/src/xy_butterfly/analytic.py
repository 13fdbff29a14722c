"""Quasiparticle dispersion of the XY chain and its maximal group velocity.

The chain maps onto free fermions, with single-particle energies

    eps(k) = -2 J sqrt((h - cos k)^2 + r^2 sin^2 k)

(lattice spacing 1). The butterfly velocity is the largest ``|d eps / dk|``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np

GRID_POINTS = 4096
REFINE_TOL = 1e-10
LIMIT_OFFSET = 1e-6
_GAP_EPS = 1e-12
_INV_PHI = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class VelocityResult:
    v_B: float
    k_star: float
    method: str  # "closed-form" or "grid+refine"


def reduce_momentum(k):
    """Map ``k`` into ``[-pi, pi]``."""
    k = np.asarray(k, dtype=float)
    out = np.mod(k + np.pi, 2 * np.pi) - np.pi
    # keep +pi as +pi rather than folding it onto -pi
    out = np.where(np.isclose(out, -np.pi) & (k > 0), np.pi, out)
    return out if out.ndim else float(out)


def _gap(k, r, h):
    return np.sqrt((h - np.cos(k)) ** 2 + r**2 * np.sin(k) ** 2)


def dispersion(k, J, r, h):
    out = -2 * J * _gap(np.asarray(k, dtype=float), r, h)
    return out if np.ndim(out) else float(out)


def _raw_group_velocity(k, J, r, h):
    s, c = np.sin(k), np.cos(k)
    return -2 * J * (s * (h - c) + r**2 * s * c) / _gap(k, r, h)


def group_velocity(k, J, r, h, return_limit_flag=False):
    """``d eps / dk``; at gap-closing momenta the one-sided limit is returned.

    Where the gap vanishes the formula is 0/0. There we evaluate at
    ``k -/+ 1e-6`` and keep whichever side has the larger magnitude. With
    ``return_limit_flag`` a boolean mask marking those points is also returned.
    """
    k = np.asarray(k, dtype=float)
    degenerate = _gap(k, r, h) < _GAP_EPS
    with np.errstate(invalid="ignore", divide="ignore"):
        v = _raw_group_velocity(k, J, r, h)
    if np.any(degenerate):
        kd = k[degenerate] if k.ndim else k
        left = _raw_group_velocity(kd - LIMIT_OFFSET, J, r, h)
        right = _raw_group_velocity(kd + LIMIT_OFFSET, J, r, h)
        lim = np.where(np.abs(left) >= np.abs(right), left, right)
        if k.ndim:
            v = v.copy()
            v[degenerate] = lim
        else:
            v = lim
    v = v if np.ndim(v) else float(v)
    if return_limit_flag:
        return v, degenerate
    return v


def _golden_max(f, a, b, tol=REFINE_TOL):
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return (a + b) / 2


def butterfly_velocity(J, r, h) -> VelocityResult:
    """Maximal ``|v_g|`` over ``k in [0, pi]``."""
    J, r, h = float(J), float(r), float(h)
    if not all(math.isfinite(x) for x in (J, r, h)):
        raise ValueError("J, r, h must be finite")
    if J == 0.0:
        return VelocityResult(0.0, 0.0, "closed-form")
    if r == 0.0:
        # v_g = -/+ 2J sin k for either sign of h - cos k
        return VelocityResult(2 * abs(J), math.pi / 2, "closed-form")
    if abs(r) == 1.0:
        k_star = math.acos(max(-1.0, min(1.0, 1 / h))) if abs(h) > 1 else math.acos(h)
        return VelocityResult(2 * abs(J) * min(1.0, abs(h)), k_star, "closed-form")

    speed = lambda k: abs(float(group_velocity(k, J, r, h)))  # noqa: E731
    ks = np.linspace(0.0, np.pi, GRID_POINTS)
    vs = np.abs(group_velocity(ks, J, r, h))
    i = int(np.argmax(vs))
    a, b = ks[max(i - 1, 0)], ks[min(i + 1, GRID_POINTS - 1)]
    k_star = _golden_max(speed, a, b)
    v = speed(k_star)
    if vs[i] > v:
        k_star, v = float(ks[i]), float(vs[i])
    return VelocityResult(v, float(k_star), "grid+refine")


def vb_sweep(r_grid, h_grid, J=1.0) -> np.ndarray:
    """``v_B`` on the grid; rows follow ``r_grid``, columns ``h_grid``."""
    r_grid = np.atleast_1d(np.asarray(r_grid, dtype=float))
    h_grid = np.atleast_1d(np.asarray(h_grid, dtype=float))
    out = np.empty((r_grid.size, h_grid.size))
    for a, r in enumerate(r_grid):
        for b, h in enumerate(h_grid):
            out[a, b] = butterfly_velocity(J, r, h).v_B
    return out


def write_sweep_csv(fh, r_grid, h_grid, vb) -> None:
    """Write a sweep as ``r,h,v_B`` rows to the open text file ``fh``."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["r", "h", "v_B"])
    for a, r in enumerate(r_grid):
        for b, h in enumerate(h_grid):
            w.writerow([f"{r:.12g}", f"{h:.12g}", f"{vb[a, b]:.12g}"])


def free_fermion_spectrum(J, r, h, n) -> np.ndarray:
    """Sorted many-body spectrum of the periodic ``n``-site chain from ``eps(k)``.

    The Jordan-Wigner string splits the Hilbert space into two parity
    sectors with antiperiodic (``k = 2 pi (m + 1/2) / n``) and periodic
    (``k = 2 pi m / n``) momenta. The antiperiodic sector keeps the
    configurations with an even number of occupied modes, the periodic one
    those with an odd number. Paired modes carry ``eps(k)``; the unpaired
    ``k = 0, pi`` modes carry the signed ``-2J (h - cos k)``.
    """
    energies = []
    for shift, parity in ((0.5, 0), (0.0, 1)):
        ks = 2 * np.pi * (np.arange(n) + shift) / n
        modes = [
            -2 * J * (h - np.cos(k)) if abs(np.sin(k)) < 1e-12 else dispersion(k, J, r, h)
            for k in ks
        ]
        modes = np.array(modes)
        for occ in itertools.product((0, 1), repeat=n):
            if sum(occ) % 2 != parity:
                continue
            energies.append(float(np.dot(modes, np.array(occ) - 0.5)))
    return np.sort(energies)
