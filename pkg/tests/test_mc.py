import json

import numpy as np
import pytest
from scipy import stats

from wittenexit.errors import SparseTable, StepBudgetExceeded, TooFewSamples
from wittenexit.mc import (ExitStatistics, compute_qsd, default_dt, density_histogram,
                           dt_halving_check, em_step, exit_ensemble, exit_histogram,
                           hyperdyn_compare, independence_test, ks_exponential, rng_stream,
                           sample_qsd, simulate_exit, total_variation)
from wittenexit.potential import Interval, constant, make_case, make_field
from wittenexit.spectra import exit_density_pde


def _synthetic(tau, labels, ends=(-1.0, 1.0)):
    ends = np.asarray(ends)
    loc = ends[labels][:, None]
    n = len(tau)
    return ExitStatistics(np.asarray(tau, dtype=float), loc, loc[:, 0].copy(),
                          np.ones(n, dtype=np.int64), np.zeros(n, dtype=bool), {}, ends)


@pytest.fixture(scope="module")
def harmonic_ensemble():
    # h = 0.5: exits take about a thousand steps, so small ensembles are cheap
    f, pair = make_case("harmonic1d")
    q = compute_qsd(f, pair.plus, 0.5)
    return f, pair, q, exit_ensemble(f, pair, 4.0, 1e-3, 2000, seed=11, qsd=q)


def test_rng_streams():
    a = rng_stream(1, 0, 5).random(4)
    assert np.array_equal(a, rng_stream(1, 0, 5).random(4))
    assert not np.array_equal(a, rng_stream(1, 0, 6).random(4))
    assert not np.array_equal(a, rng_stream(1, 1, 5).random(4))
    assert not np.array_equal(a, rng_stream(1, 0, 5, purpose=1).random(4))


def test_em_step_examples():
    f = make_field("harmonic1d")
    assert em_step(f, [0.5], 0.1, 1.0, [0.0]) == pytest.approx([0.45])
    assert em_step(constant(0.0), [0.0], 0.5, 4.0, [1.0]) == pytest.approx([0.5])
    with pytest.raises(ValueError):
        em_step(f, [0.0], 0.0, 1.0, [0.0])


def test_em_ornstein_uhlenbeck_variance():
    # stationary variance of the discrete OU chain: (2/beta)/(2 - dt)
    f = make_field("harmonic1d")
    rng = np.random.default_rng(0)
    beta, dt = 2.0, 0.01
    x = np.zeros(20000)
    for _ in range(1500):
        x = em_step(f, x, dt, beta, rng.standard_normal(x.shape))
    expect = (2 / beta) / (2 - dt)
    assert np.var(x) == pytest.approx(expect, rel=0.03)


def test_sample_qsd_free_case():
    # zero potential: the QSD is (pi/4) cos(pi x/2) on (-1, 1)
    q = compute_qsd(constant(0.0), Interval(-1, 1), 1.0, spacing=1e-3)
    x = sample_qsd(q, np.random.default_rng(2), 5000)[:, 0]
    assert np.all(np.abs(x) < 1)
    p = stats.kstest(x, lambda t: (1 + np.sin(np.pi * t / 2)) / 2).pvalue
    assert p > 0.01
    assert np.mean(x * x) == pytest.approx(1 - 8 / np.pi**2, abs=0.01)


def test_sample_qsd_concentrates():
    # small h: the QSD approaches the Gaussian exp(-x^2/h), variance h/2
    f, pair = make_case("harmonic1d")
    h = 0.05
    x = sample_qsd(compute_qsd(f, pair.plus, h), np.random.default_rng(3), 4000)[:, 0]
    assert abs(np.mean(x)) < 0.01
    assert np.var(x) == pytest.approx(h / 2, rel=0.08)


def test_sample_qsd_2d():
    f, pair = make_case("radial2d")
    q = compute_qsd(f, pair.plus, 0.5)
    p = sample_qsd(q, np.random.default_rng(4), 500)
    assert p.shape == (500, 2)
    assert np.all(pair.plus.inside(p))


def test_simulate_exit_near_boundary():
    f, pair = make_case("harmonic1d")
    s = simulate_exit(f, pair.plus, [0.999], 1e-5, 10.0, seed=1)
    assert not s.censored and s.tau > 0
    assert s.location[0] in (-1.0, 1.0)
    s2 = simulate_exit(f, pair.plus, [0.999], 1e-5, 10.0, seed=1)
    assert s2.tau == s.tau and s2.steps == s.steps
    with pytest.raises(ValueError):
        simulate_exit(f, pair.plus, [1.5], 1e-3, 10.0)


def test_simulate_exit_2d():
    f, pair = make_case("radial2d")
    c = np.asarray(pair.plus.center)
    x0 = c + [pair.plus.radius - 0.01, 0.0]
    s = simulate_exit(f, pair.plus, x0, 1e-4, 2.0, seed=2)
    assert not s.censored
    assert np.linalg.norm(s.location - c) == pytest.approx(pair.plus.radius, abs=1e-12)


def test_empty_ensemble():
    f, pair = make_case("harmonic1d")
    st = exit_ensemble(f, pair, 4.0, 1e-3, 0)
    assert st.n == 0 and st.censoring_fraction == 0.0


def test_ensemble_determinism(harmonic_ensemble):
    f, pair, q, ref = harmonic_ensemble
    a = exit_ensemble(f, pair, 4.0, 1e-3, 300, seed=11, qsd=q)
    b = exit_ensemble(f, pair, 4.0, 1e-3, 300, seed=11, qsd=q, threads=3, batch=37)
    for k in ("tau", "location", "param", "steps", "censored"):
        assert np.array_equal(getattr(a, k), getattr(b, k))
        assert np.array_equal(getattr(a, k), getattr(ref, k)[:300])


def test_censoring_and_strict():
    f, pair = make_case("harmonic1d")
    q = compute_qsd(f, pair.plus, 0.5)
    st = exit_ensemble(f, pair, 4.0, 1e-3, 20, qsd=q, max_steps=3)
    assert st.censored.all() and st.censoring_fraction == 1.0
    with pytest.raises(StepBudgetExceeded):
        exit_ensemble(f, pair, 4.0, 1e-3, 20, qsd=q, max_steps=3, strict=True)


def test_exit_law_harmonic(harmonic_ensemble):
    f, pair, q, st = harmonic_ensemble
    assert st.censoring_fraction == 0.0
    rate = q.lambda1 / (2 * q.h)
    assert ks_exponential(st.tau, rate)[1] > 0.01
    _, p = independence_test(st)
    assert p > 0.01
    d = exit_density_pde(f, q.grid, q.u1, q.h)
    assert total_variation(exit_histogram(st), density_histogram(d)) <= 0.05


def test_ks_exponential_null_and_misfit():
    t = np.random.default_rng(5).exponential(2.0, 3000)
    assert ks_exponential(t, 0.5)[1] > 0.01
    assert ks_exponential(t, 1.0)[1] < 0.01
    with pytest.raises(TooFewSamples):
        ks_exponential(t[:10], 0.5)
    with pytest.raises(ValueError):
        ks_exponential(t, 0.0)


def test_independence_null_and_coupled():
    rng = np.random.default_rng(6)
    tau = rng.exponential(1.0, 4000)
    lab = rng.integers(0, 2, 4000)
    assert independence_test(_synthetic(tau, lab))[1] > 0.01
    # late exits prefer the right endpoint
    coupled = np.where(rng.random(4000) < np.where(tau > 1.0, 0.7, 0.4), 1, 0)
    assert independence_test(_synthetic(tau, coupled))[1] < 1e-3


def test_independence_sparse_table():
    tau = np.random.default_rng(7).exponential(1.0, 500)
    with pytest.raises(SparseTable):
        independence_test(_synthetic(tau, np.zeros(500, dtype=int)))
    lab = np.zeros(500, dtype=int)
    lab[:3] = 1
    with pytest.raises(SparseTable):
        independence_test(_synthetic(tau, lab))


def test_histograms():
    st = _synthetic(np.ones(4), np.array([0, 1, 1, 1]))
    assert np.allclose(exit_histogram(st), [0.25, 0.75])
    assert total_variation([0.25, 0.75], [0.5, 0.5]) == pytest.approx(0.25)


def test_hyperdyn_compare_trivial_boost():
    f, pair = make_case("harmonic1d")
    q = compute_qsd(f, pair.plus, 0.5)
    a = exit_ensemble(f, pair, 4.0, 1e-3, 2000, seed=3, qsd=q, stream=0)
    b = exit_ensemble(f, pair, 4.0, 1e-3, 2000, seed=3, qsd=q, stream=1)
    r = hyperdyn_compare(a, b, 1.0)
    assert r["ks_pass"] and r["tv_pass"]
    assert hyperdyn_compare(a, b, 2.0)["ks_pvalue"] < 0.01


def test_dt_halving(harmonic_ensemble):
    f, pair, q, _ = harmonic_ensemble
    r = dt_halving_check(f, pair, 4.0, 500, seed=5, dt=2e-3, qsd=q)
    assert r["pass"]
    assert r["stderr_shift"] < r["stderr"]
    assert r["coarse"].n == r["fine"].n == 500


def test_default_dt():
    assert default_dt(0.2) == 1e-3
    assert default_dt(0.05) == pytest.approx(2.5e-4)


def test_samples_csv_and_header(tmp_path, harmonic_ensemble):
    st = harmonic_ensemble[3]
    st.write_csv(tmp_path / "s.csv")
    st.write_header(tmp_path / "s.json")
    rows = (tmp_path / "s.csv").read_text().splitlines()
    assert rows[0] == "index,tau,x,param,steps,censored" and len(rows) == st.n + 1
    assert float(rows[1].split(",")[1]) == st.tau[0]
    hdr = json.loads((tmp_path / "s.json").read_text())
    assert hdr["n"] == st.n and hdr["config"]["seed"] == 11
