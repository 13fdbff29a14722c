import io
import math

import numpy as np
import pytest

from conftest import haar
from xy_butterfly.model import ModelParams, build_xy_hamiltonian, exact_evolution
from xy_butterfly.rtr import TrotterTimeCompiler, brickwall_expand, trotter_compile
from xy_butterfly.sim import NoiseSpec
from xy_butterfly.yky import (
    SURFACE_HEADER,
    ProtocolSpec,
    averaged_otoc_oracle,
    otoc_surface,
    read_surface_csv,
    squared_commutator,
    wilson_halfwidth,
    write_surface_csv,
    yky_run,
)


def random_instance(n, rng):
    params = ModelParams(rng.uniform(0.3, 1.5), rng.uniform(-2.5, 2.5), rng.uniform(-1.5, 1.5), n)
    t = rng.uniform(0.0, 2.0)
    j = int(rng.integers(2, n + 1))
    return params, t, j


def test_oracle_identity():
    for n in (2, 3):
        for j in range(2, n + 1):
            assert averaged_otoc_oracle(np.eye(2**n), j) == pytest.approx(1.0, abs=1e-14)


def test_oracle_when_evolution_avoids_site_one(rng):
    U = np.kron(np.eye(2), haar(4, rng))
    for j in (2, 3):
        assert averaged_otoc_oracle(U, j) == pytest.approx(1.0, abs=1e-12)


def test_oracle_rejects_bad_site():
    with pytest.raises(ValueError):
        averaged_otoc_oracle(np.eye(8), 1)
    with pytest.raises(ValueError):
        averaged_otoc_oracle(np.eye(8), 4)


def test_random_two_qubit_unitary_matches_oracle(rng):
    for _ in range(5):
        U = haar(4, rng)
        rec = yky_run(ProtocolSpec(ModelParams(n=2), 2, evolution=U))
        assert rec.otoc == pytest.approx(averaged_otoc_oracle(U, 2), abs=1e-10)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_protocol_matches_oracle_on_hamiltonians(n, rng):
    for _ in range(5):
        params, t, j = random_instance(n, rng)
        rec = yky_run(ProtocolSpec(params, j, t))
        U = exact_evolution(build_xy_hamiltonian(params), t)
        oracle = averaged_otoc_oracle(U, j)
        assert abs(1 / (4 * rec.F_EPR) - oracle) <= 1e-10
        assert rec.C == pytest.approx(2 - 2 * oracle, abs=1e-10)
        assert 4 * rec.F_EPR * rec.otoc == pytest.approx(1.0, abs=1e-12)


def test_zero_time_record():
    for j in range(2, 6):
        rec = yky_run(ProtocolSpec(ModelParams(1, 2.1, 0.8, 5), j, 0.0))
        assert rec.F_EPR == pytest.approx(0.25, abs=1e-10)
        assert rec.C == pytest.approx(0.0, abs=1e-10)


def test_record_ranges(rng):
    for _ in range(20):
        n = int(rng.integers(2, 5))
        U = haar(2**n, rng)
        j = int(rng.integers(2, n + 1))
        rec = yky_run(ProtocolSpec(ModelParams(n=n), j, evolution=U))
        assert -1e-10 <= rec.C <= 2.25 + 1e-10
        assert 0 < rec.F_EPR <= 1
        if averaged_otoc_oracle(U, j) <= 1 + 1e-12:
            assert rec.F_EPR >= 0.25 - 1e-10


def test_squared_commutator_values():
    assert squared_commutator(0.25) == pytest.approx(0.0)
    assert squared_commutator(0.5) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        squared_commutator(0.0)


def test_compiled_evolution_matches_its_dense_expansion():
    params = ModelParams(1, 0.4, 0.3, 4)
    seq = trotter_compile(params, 0.8, 6)
    a = yky_run(ProtocolSpec(params, 3, 0.8, evolution=seq))
    b = yky_run(ProtocolSpec(params, 3, 0.8, evolution=brickwall_expand(seq)))
    assert a.F_EPR == pytest.approx(b.F_EPR, abs=1e-12)


def test_sampled_agrees_with_exact():
    params = ModelParams(1, 0.0, 0.0, 4)
    exact = yky_run(ProtocolSpec(params, 2, 0.6))
    shots = 100_000
    sampled = yky_run(ProtocolSpec(params, 2, 0.6, mode="sampled", shots=shots, seed=11))
    # binomial error of the conditional frequency
    cond = shots * (1 / (4 * exact.F_EPR))
    sigma = math.sqrt(exact.F_EPR * (1 - exact.F_EPR) / cond)
    assert abs(sampled.F_EPR - exact.F_EPR) <= 5 * sigma
    assert sampled.ci_halfwidth > 0


def test_sampled_mode_is_reproducible():
    spec = ProtocolSpec(ModelParams(n=3), 2, 0.5, mode="sampled", shots=2000, seed=9)
    assert yky_run(spec) == yky_run(spec)


def test_noiseless_noisy_mode_matches_exact():
    params = ModelParams(1, 0.5, 0.2, 3)
    seq = trotter_compile(params, 0.7, 4)
    exact = yky_run(ProtocolSpec(params, 3, 0.7, evolution=seq))
    noisy = yky_run(ProtocolSpec(params, 3, 0.7, evolution=seq, mode="noisy", trajectories=3))
    assert noisy.F_EPR == pytest.approx(exact.F_EPR, abs=1e-12)


def noisy_record(params, seq, j, p2, trajectories=300, seed=0):
    spec = ProtocolSpec(
        params, j, 0.0, evolution=seq, mode="noisy", noise=NoiseSpec(p2, 0.0),
        trajectories=trajectories, seed=seed,
    )
    return yky_run(spec)


def test_fidelity_decreases_with_two_qubit_noise():
    params = ModelParams(1, 0.0, 0.0, 3)
    seq = trotter_compile(params, 0.9, 6)
    recs = [noisy_record(params, seq, 3, p2) for p2 in (0.0, 0.01, 0.05)]
    for lo, hi in zip(recs, recs[1:]):
        sigma = math.hypot(lo.ci_halfwidth, hi.ci_halfwidth) / 1.96
        assert hi.F_EPR <= lo.F_EPR + 3 * sigma


def test_noise_only_raises_the_otoc_estimate():
    params = ModelParams(1, 2.1, 0.8, 3)
    seq = trotter_compile(params, 0.6, 6)
    U = brickwall_expand(seq)
    for j in (2, 3):
        oracle = averaged_otoc_oracle(U, j)
        for p2 in (0.02, 0.1):
            rec = noisy_record(params, seq, j, p2, seed=j)
            sigma = rec.ci_halfwidth / 1.96 / (4 * rec.F_EPR**2)
            assert rec.otoc >= oracle - 3 * sigma


def test_wilson_halfwidth():
    assert wilson_halfwidth(0, 0) == math.inf
    assert 0 < wilson_halfwidth(50, 100) < 0.1
    assert wilson_halfwidth(500, 1000) < wilson_halfwidth(50, 100)


@pytest.mark.parametrize(
    "kwargs",
    [dict(j=1), dict(j=6), dict(j=2, mode="weird"), dict(j=2, mode="sampled"), dict(j=2, mode="noisy", trajectories=0)],
)
def test_protocol_spec_validation(kwargs):
    with pytest.raises(ValueError):
        ProtocolSpec(ModelParams(n=5), **kwargs)


def test_surface_zero_column_and_ordering():
    params = ModelParams(1, 0.0, 0.0, 5)
    ts = np.round(np.arange(0, 2.01, 0.05), 12)
    recs = otoc_surface(params, [2, 3, 4, 5], ts)
    assert all(abs(r.C) <= 1e-10 for r in recs if r.t == 0.0)
    first = {}
    for r in recs:
        if r.C >= 0.1 and r.j not in first:
            first[r.j] = r.t
    assert first[2] <= first[3] <= first[4] <= first[5]


def test_surface_field_parity():
    ts = [0.0, 0.4, 0.9, 1.3]
    a = otoc_surface(ModelParams(1, 0.0, 0.6, 4), [2, 3, 4], ts)
    b = otoc_surface(ModelParams(1, 0.0, -0.6, 4), [2, 3, 4], ts)
    assert all(abs(x.C - y.C) <= 1e-9 for x, y in zip(a, b))


def test_surface_records_failures_and_continues():
    params = ModelParams(1, 0.3, 0.2, 3)
    good = TrotterTimeCompiler(params, 4)

    def flaky(t):
        if t == 0.5:
            raise ArithmeticError("no convergence")
        return good(t)

    recs = otoc_surface(params, [2, 3], [0.0, 0.5, 1.0], compiler=flaky)
    assert len(recs) == 6
    failed = [r for r in recs if r.error]
    assert len(failed) == 2 and all(r.t == 0.5 for r in failed)
    assert all(r.error is None for r in recs if r.t != 0.5)


def test_surface_stops_once_every_site_crossed():
    params = ModelParams(1, 0.0, 0.0, 3)
    ts = np.round(np.arange(0, 3.01, 0.05), 12)
    recs = otoc_surface(params, [2, 3], ts, stop_when_crossed=0.1)
    assert max(r.t for r in recs) < 3.0
    assert max(r.C for r in recs if r.j == 3 and r.t == max(x.t for x in recs)) >= 0.1


def test_surface_csv_round_trip():
    recs = otoc_surface(ModelParams(n=3), [2, 3], [0.0, 0.3])
    buf = io.StringIO()
    write_surface_csv(buf, recs)
    text = buf.getvalue()
    assert text.splitlines()[0].startswith(",".join(SURFACE_HEADER))
    back = read_surface_csv(io.StringIO("# seed=0\n" + text))
    assert len(back) == len(recs)
    for a, b in zip(recs, back):
        assert a.j == b.j and a.t == b.t
        assert b.C == pytest.approx(a.C, rel=1e-11, abs=1e-12)


def test_surface_rejects_bad_sites():
    with pytest.raises(ValueError):
        otoc_surface(ModelParams(n=3), [1], [0.0])
