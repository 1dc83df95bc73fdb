import math

import numpy as np
import pytest
from scipy.stats import kstest

from hdtomo import patterns
from hdtomo.errors import DataError
from hdtomo.simulate import (
    TRUNCATION_FAIL,
    TRUNCATION_WARN,
    MarginalTable,
    SimulationPlan,
    make_state,
    marginals,
    oscillator_wavefunctions,
    phase_grid,
    quadrature_grid,
    run_experiment,
    sample,
)


def test_vacuum_is_coherent_zero():
    state = make_state("coherent", 0.0, 4)
    assert state.c[0] == 1.0
    assert np.all(state.c[1:] == 0.0)
    assert state.deficit == 0.0
    rho = state.density_matrix()
    assert rho[0, 0] == 1.0 and np.count_nonzero(rho) == 1


def test_coherent_coefficients_and_deficit():
    state = make_state("coherent", 1.0, 12)
    for n in range(12):
        expect = math.exp(-0.5) / math.sqrt(math.factorial(n))
        assert state.c[n].real == pytest.approx(expect, rel=1e-12)
        assert state.c[n].imag == 0.0
    # the truncation deficit shrinks as the cutoff grows
    d10 = make_state("coherent", 1.0, 10).deficit
    d14 = make_state("coherent", 1.0, 14).deficit
    d18 = make_state("coherent", 1.0, 18).deficit
    assert d10 > d14 > 0.0
    assert 0.0 <= d18 <= d14


def test_deficit_warn_and_error():
    assert TRUNCATION_WARN == 1e-6 and TRUNCATION_FAIL == 1e-2
    with pytest.warns(UserWarning, match="truncation deficit"):
        make_state("coherent", 2.0, 12)
    with pytest.raises(DataError, match="increase M"):
        make_state("coherent", 3.0, 8)


def test_cat_structure():
    state = make_state("cat", 3.0, 64)
    assert np.all(state.c[1::2] == 0.0)
    norm = math.sqrt(2.0 * (1.0 + math.exp(-18.0)))
    assert state.c[0].real == pytest.approx(2.0 * math.exp(-4.5) / norm, rel=1e-12)
    assert abs(np.sum(np.abs(state.c) ** 2) - 1.0) < 1e-10
    assert state.deficit >= 0.0


def test_fock_superposition_pair():
    state = make_state("fock_superposition", [600, 700], 800)
    nz = np.flatnonzero(state.c)
    assert list(nz) == [600, 700]
    assert state.c[600] == state.c[700] == 1.0 / math.sqrt(2.0)
    assert state.deficit == 0.0


def test_make_state_validation():
    with pytest.raises(ValueError, match="distinct"):
        make_state("fock_superposition", [1, 1], 4)
    with pytest.raises(ValueError, match="at least one"):
        make_state("fock_superposition", [], 4)
    with pytest.raises(ValueError, match="0[.][.]3"):
        make_state("fock_superposition", [5], 4)
    with pytest.raises(ValueError, match="kind"):
        make_state("squeezed", 1.0, 4)
    with pytest.raises(ValueError, match="M"):
        make_state("coherent", 1.0, 0)


def test_wavefunction_convention_matches_patterns():
    x = np.linspace(-3.0, 3.0, 11)
    psi = oscillator_wavefunctions(x, 12)
    cfg = patterns.PatternConfig(cutoff=12, beta=1.0)
    u, _ = patterns.regular_sequence(x, cfg)
    expect = (2.0 / math.pi) ** 0.25 * np.exp(-x * x) * u[:13]
    assert np.max(np.abs(psi - expect)) <= 1e-13 * np.max(np.abs(expect))


def test_wavefunctions_are_normalized():
    x = np.linspace(-8.0, 8.0, 4001)
    psi = oscillator_wavefunctions(x, 6)
    norms = np.trapezoid(psi**2, x, axis=1)
    assert np.max(np.abs(norms - 1.0)) < 1e-8


def test_grids():
    x = quadrature_grid(16, 101)
    assert x.size == 101
    assert x[0] == -(math.sqrt(16.5) + 3.0) and x[-1] == math.sqrt(16.5) + 3.0
    ph = phase_grid(4)
    assert np.allclose(ph, [0.0, math.pi / 2, math.pi, 1.5 * math.pi], rtol=0, atol=1e-15)
    with pytest.raises(ValueError):
        phase_grid(0)


def test_vacuum_marginal_closed_form():
    state = make_state("coherent", 0.0, 4)
    x = np.linspace(-5.0, 5.0, 2001)
    table = marginals(state, [0.0, 1.1], x)
    expect = math.sqrt(2.0 / math.pi) * np.exp(-2.0 * x * x)
    assert np.max(np.abs(table.p[0] - expect)) <= 1e-10
    # vacuum has trivial phase dependence, bit-exactly after renormalization
    assert np.array_equal(table.p[0], table.p[1])
    var = np.trapezoid(table.p[0] * x * x, x)
    assert var == pytest.approx(0.25, abs=1e-6)


def test_marginal_rows_integrate_to_one():
    state = make_state("cat", 2.0, 32)
    x = quadrature_grid(32, 2048)
    table = marginals(state, phase_grid(5), x)
    assert np.all(table.p >= 0.0)
    masses = np.trapezoid(table.p, x, axis=1)
    assert np.max(np.abs(masses - 1.0)) < 1e-12


def test_fock_marginal_phase_invariant():
    state = make_state("fock_superposition", [2], 8)
    x = quadrature_grid(8, 1024)
    table = marginals(state, [0.0, 0.9, 2.3], x)
    assert np.allclose(table.p[1], table.p[0], rtol=1e-12, atol=1e-300)
    assert np.allclose(table.p[2], table.p[0], rtol=1e-12, atol=1e-300)
    psi2 = oscillator_wavefunctions(x, 2)[2] ** 2
    assert np.max(np.abs(table.p[0] - psi2)) <= 1e-10


def test_cat_marginal_bimodal_and_fringed():
    state = make_state("cat", 3.0, 64)
    x = quadrature_grid(64, 4096)
    table = marginals(state, [0.0, math.pi / 2.0], x)
    p0, p1 = table.p
    # phase 0: two lobes at +-alpha (quadrature units where vacuum var = 1/4)
    right = (x > 1.0)
    xpk = x[right][np.argmax(p0[right])]
    assert abs(xpk - 3.0) < 0.1
    mid = np.abs(x) < 0.3
    assert np.max(p0[mid]) < np.max(p0) / 100.0
    # phase pi/2: interference fringes under the Gaussian envelope, with
    # near-unit visibility (deep minima between adjacent peaks)
    band = np.abs(x) < 2.0
    pb = p1[band]
    interior = np.arange(1, pb.size - 1)
    peaks = interior[(pb[1:-1] > pb[:-2]) & (pb[1:-1] > pb[2:]) & (pb[1:-1] > 0.05 * pb.max())]
    assert peaks.size >= 3
    valleys = [pb[a:b].min() for a, b in zip(peaks[:-1], peaks[1:])]
    assert max(valleys) < 0.02 * pb.max()


def test_marginal_variance_matches_density_matrix():
    state = make_state("fock_superposition", [0, 1, 3], 8)
    x = np.linspace(-8.0, 8.0, 16385)
    phases = [0.0, 0.7, 2.1]
    table = marginals(state, phases, x)
    a = np.diag(np.sqrt(np.arange(1.0, 8.0)), k=1)
    rho = state.density_matrix()
    for j, phi in enumerate(phases):
        X = 0.5 * (a.conj().T * np.exp(1j * phi) + a * np.exp(-1j * phi))
        expect = np.trace(rho @ X @ X).real
        got = np.trapezoid(table.p[j] * x * x, x)
        assert got == pytest.approx(expect, abs=1e-6)


def test_marginal_grid_too_narrow():
    state = make_state("cat", 3.0, 64)
    with pytest.raises(DataError, match="grid too narrow"):
        marginals(state, [0.0], np.linspace(-1.0, 1.0, 256))


def test_sampler_is_deterministic():
    state = make_state("cat", 1.5, 24)
    x = quadrature_grid(24, 2048)
    table = marginals(state, phase_grid(4), x)
    plan = SimulationPlan(nsamples=50, nblks=3, n_phi=4, seed=42)
    ds1 = sample(table, plan)
    ds2 = sample(table, plan)
    assert np.array_equal(ds1.values, ds2.values)
    assert np.array_equal(ds1.phases, ds2.phases)
    assert np.array_equal(ds1.block, ds2.block)
    assert ds1.N == plan.total_samples == 600


def test_sampler_per_phase_streams():
    # each phase owns an independent generator keyed by (seed, phase index),
    # so a run over fewer phases reproduces the shared prefix
    state = make_state("coherent", 1.0, 16)
    x = quadrature_grid(16, 2048)
    full = sample(marginals(state, phase_grid(4), x),
                  SimulationPlan(nsamples=40, nblks=2, n_phi=4, seed=9))
    part = sample(marginals(state, phase_grid(4)[:2], x),
                  SimulationPlan(nsamples=40, nblks=2, n_phi=2, seed=9))
    assert np.array_equal(part.values, full.values[: 2 * 80])


def test_sampler_block_layout():
    state = make_state("coherent", 0.0, 2)
    x = quadrature_grid(2, 512)
    table = marginals(state, phase_grid(2), x)
    ds = sample(table, SimulationPlan(nsamples=3, nblks=2, n_phi=2, seed=0))
    assert ds.block.dtype == np.uint16
    assert list(ds.block) == [0, 0, 0, 1, 1, 1, 0, 0, 0, 1, 1, 1]
    assert np.all(ds.phases[:6] == 0.0)
    assert np.all(ds.phases[6:] == math.pi)


def test_sampler_uniform_density_ks():
    x = np.linspace(0.0, 1.0, 512)
    table = MarginalTable(phases=np.array([0.0]), x=x, p=np.ones((1, 512)))
    ds = sample(table, SimulationPlan(nsamples=100000, nblks=1, n_phi=1, seed=13))
    stat = kstest(ds.values, "uniform").statistic
    assert stat < 1.358 / math.sqrt(ds.N)


def test_sampler_vacuum_variance():
    state = make_state("coherent", 0.0, 2)
    x = quadrature_grid(2, 4096)
    table = marginals(state, [0.0], x)
    ds = sample(table, SimulationPlan(nsamples=100000, nblks=1, n_phi=1, seed=5))
    var = np.var(ds.values, ddof=1)
    sigma = 0.25 * math.sqrt(2.0 / (ds.N - 1))
    assert abs(var - 0.25) < 3.0 * sigma
    assert abs(np.mean(ds.values)) < 3.0 * 0.5 / math.sqrt(ds.N)


def test_plan_validation():
    with pytest.raises(ValueError):
        SimulationPlan(nsamples=0, nblks=1, n_phi=1, seed=0)
    with pytest.raises(ValueError):
        SimulationPlan(nsamples=1, nblks=1, n_phi=1, seed=0, grid_points=8)
    state = make_state("coherent", 0.0, 2)
    x = quadrature_grid(2, 512)
    table = marginals(state, phase_grid(2), x)
    with pytest.raises(ValueError, match="n_phi"):
        sample(table, SimulationPlan(nsamples=5, nblks=1, n_phi=3, seed=0))


def test_run_experiment_vacuum_trace_compatible():
    state = make_state("coherent", 0.0, 8)
    plan = SimulationPlan(nsamples=500, nblks=4, n_phi=8, seed=3)
    out = run_experiment(state, plan)
    diag = out["diagnostics"]
    assert diag["trace_compatible"]
    assert abs(diag["trace"] - 1.0) <= 3.0 * diag["trace_err"]
    assert diag["max_sigma_dev"] < 6.0
    assert out["estimate"].M == 8


def test_run_experiment_single_block_path():
    state = make_state("coherent", 0.0, 4)
    plan = SimulationPlan(nsamples=2000, nblks=1, n_phi=8, seed=2)
    out = run_experiment(state, plan)
    est = out["estimate"]
    assert est.M == 4
    assert np.all(np.isfinite(est.rho))
    assert abs(est.trace - 1.0) <= 5.0 * est.trace_err
    assert est.err_im[0, 0] == 0.0
