import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from cplab.distributions import InnovationDensity
from cplab.errors import DegeneratePosteriorError, OutOfParameterSpaceError, UnidentifiableModelError
from cplab.markov import Drift, TARModel, simulate_chain
from cplab.metrics import EmpiricalLaw, levy_distance
from cplab.threshold import (
    LikelihoodRatioProcess,
    TruncatedGaussianPrior,
    UniformPrior,
    bayes_estimate,
    bayes_estimate_grid,
    estimator_asymptotics_study,
    likelihood_ratio_process,
    likelihood_steps,
    limit_draws,
    limit_estimator_draw,
    log_likelihood,
    log_Zn,
    posterior_mean,
    ratio_of_integrals,
    sample_limit_process,
)


@pytest.fixture
def path(tar_model):
    return simulate_chain(tar_model, 500, rng=np.random.default_rng(8))


def test_log_likelihood_single_regime(gauss, path):
    wide = TARModel(Drift.linear(0.5), Drift.linear(-0.5), 0.5, -10.0, 10.0, gauss)
    x = path.states
    ref = stats.norm.logpdf(x[1:] + 0.5 * x[:-1]).sum()
    assert log_likelihood(x, wide, x.max() + 1e-3) == pytest.approx(ref, rel=1e-12)


def test_log_likelihood_flat_without_regime_jump(gauss, path):
    flat = TARModel(Drift.linear(0.3), Drift.linear(0.3), 0.0, -1.0, 1.0, gauss, check_identifiable=False)
    vals = [log_likelihood(path.states, flat, th) for th in (-0.9, 0.0, 0.4)]
    assert max(vals) - min(vals) == 0.0


def test_log_likelihood_finite(tar_model, path):
    assert math.isfinite(log_likelihood(path.states, tar_model, tar_model.theta))


def test_log_Zn_trivial_cases(tar_model, path):
    assert log_Zn(path, tar_model, 0.5, 0.0) == 0.0
    prev = path.states[:-1]
    gap = prev[prev >= 0.5].min() - 0.5
    assert log_Zn(path, tar_model, 0.5, 0.5 * gap * path.n) == 0.0
    with pytest.raises(OutOfParameterSpaceError):
        log_Zn(path, tar_model, 0.5, 0.6 * path.n)


@settings(max_examples=60, deadline=None)
@given(st.floats(-700.0, 250.0))
def test_log_Zn_identity(u):
    q = InnovationDensity("gaussian", 1.0)
    model = TARModel(Drift.linear(0.5), Drift.linear(-0.5), 0.5, -1.0, 1.0, q)
    path = simulate_chain(model, 500, rng=np.random.default_rng(8))
    direct = log_likelihood(path.states, model, 0.5 + u / 500) - log_likelihood(path.states, model, 0.5)
    assert abs(log_Zn(path, model, 0.5, u) - direct) <= 1e-9


def test_process_matches_pointwise(tar_model, path):
    proc = likelihood_ratio_process(path, tar_model, 0.5, 200.0)
    prev = path.states[:-1]
    loc = path.n * (prev - 0.5)
    visible = loc[(loc >= -200) & (loc < 200)]
    assert np.allclose(np.sort(visible), proc.jump_locations)
    for u in np.linspace(-199, 199, 57):
        assert proc.log_value(u) == pytest.approx(log_Zn(path, tar_model, 0.5, u), abs=1e-9)


def test_steps_agree_with_direct_likelihood(tar_model, path):
    edges, levels = likelihood_steps(path.states, tar_model, -1.0, 1.0)
    mids = 0.5 * (edges[:-1] + edges[1:])
    direct = np.array([log_likelihood(path.states, tar_model, m) for m in mids])
    assert np.max(np.abs(direct - levels)) <= 1e-9


def test_bayes_without_regime_jump_is_prior_mean(gauss, path):
    flat = TARModel(Drift.linear(0.3), Drift.linear(0.3), 0.0, -1.0, 1.0, gauss, check_identifiable=False)
    assert bayes_estimate(path.states, flat, UniformPrior(-1, 1)).theta == pytest.approx(0.0, abs=1e-12)
    prior = TruncatedGaussianPrior(0.4, 0.5, -1, 1)
    assert bayes_estimate(path.states, flat, prior).theta == pytest.approx(prior.mean(), abs=1e-12)


def test_bayes_no_sample_in_parameter_space(gauss):
    model = TARModel(Drift.linear(0.5), Drift.linear(-0.5), 10.5, 10.0, 11.0, gauss)
    x = simulate_chain(model, 300, rng=np.random.default_rng(1)).states
    assert x.max() < 10
    assert bayes_estimate(x, model, UniformPrior(10, 11)).theta == pytest.approx(10.5, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1e3, 1e3))
def test_posterior_mean_rescaling_invariance(c):
    edges = np.array([-1.0, -0.3, 0.1, 0.2, 1.0])
    levels = np.array([-3.0, -1.0, -2.5, -0.5])
    prior = UniformPrior(-1, 1)
    a, _ = posterior_mean(edges, levels, prior)
    b, _ = posterior_mean(edges, levels + c, prior)
    assert abs(a - b) <= 1e-12


def test_posterior_mean_degenerate():
    with pytest.raises(DegeneratePosteriorError):
        posterior_mean(np.array([-1.0, 0.0, 1.0]), np.array([-np.inf, -np.inf]), UniformPrior(-1, 1))


def test_truncated_gaussian_prior_integrals():
    prior = TruncatedGaussianPrior(0.3, 0.4, -1.0, 1.0)
    for lo, hi in ((-1.0, 1.0), (-0.2, 0.9), (0.7, 0.71)):
        m, _ = integrate.quad(prior.pdf, lo, hi, epsabs=1e-14)
        fm, _ = integrate.quad(lambda t: t * prior.pdf(t), lo, hi, epsabs=1e-14)
        assert prior.mass(lo, hi) == pytest.approx(m, abs=1e-12)
        assert prior.first_moment(lo, hi) == pytest.approx(fm, abs=1e-12)


def test_grid_quadrature_converges_to_exact(tar_model):
    prior = UniformPrior(-1, 1)
    for seed in range(3):
        x = simulate_chain(tar_model, 500, rng=np.random.default_rng(100 + seed)).states
        exact = bayes_estimate(x, tar_model, prior).theta
        coarse = abs(bayes_estimate_grid(x, tar_model, prior, nodes=10_000).theta - exact)
        fine = abs(bayes_estimate_grid(x, tar_model, prior, nodes=1_000_000).theta - exact)
        assert fine <= 5e-6
        assert fine <= coarse + 1e-12


def test_limit_process_without_jumps():
    proc = LikelihoodRatioProcess("limit", np.array([]), np.array([]), np.array([]), np.array([]), 50.0)
    assert limit_estimator_draw(proc) == 0.0


def test_limit_ratio_step_profile():
    # Z = 1 on (0, U] and eps on [-U, 0)
    U, eps = 10.0, 1e-3
    proc = LikelihoodRatioProcess("limit", np.array([]), np.array([]), np.array([0.0]), np.array([math.log(eps)]), U)
    assert ratio_of_integrals(proc) == pytest.approx(U * (1 - eps) / (2 * (1 + eps)), rel=1e-12)


def test_limit_process_moments(gauss):
    lam, U, d = 0.4, 20.0, 1.0
    rng = np.random.default_rng(5)
    counts, marks, neg_marks = [], [], []
    for g in rng.spawn(4000):
        proc = sample_limit_process(d, gauss, lam, U, g)
        counts.append(len(proc.pos_times))
        marks.extend(proc.pos_marks)
        neg_marks.extend(proc.neg_marks)
        assert np.all(proc.pos_times <= U) and np.all(proc.neg_times <= U)
    counts = np.array(counts)
    assert abs(counts.mean() - lam * U) <= 3 * math.sqrt(lam * U / len(counts))
    for m in (np.array(marks), np.array(neg_marks)):
        # log-ratio marks are N(-d^2/2, d^2) for the standard Gaussian
        assert abs(m.mean() + d * d / 2) <= 3 * d / math.sqrt(len(m))


def test_limit_draws_insensitive_to_horizon(gauss):
    a = limit_draws(4000, 3, 1.0, gauss, 0.35, 171.0, workers=1)
    b = limit_draws(4000, 3, 1.0, gauss, 0.35, 342.0, workers=1)
    assert levy_distance(EmpiricalLaw(a), EmpiricalLaw(b)) < 1e-2


def test_study_rejects_unidentifiable(gauss):
    with pytest.raises(UnidentifiableModelError):
        TARModel(Drift.linear(0.3), Drift.linear(0.3), 0.0, -1.0, 1.0, gauss)


def test_study_single_replication(tar_model):
    report = estimator_asymptotics_study(tar_model, 200, 1, UniformPrior(-1, 1), seed=1, workers=1)
    assert 0.0 <= report.levy_distance <= 1.0
    assert report.cdf_csv().splitlines()[0] == "value,cdf_estimator,cdf_limit"


@pytest.mark.slow
def test_estimator_law_close_to_limit(tar_model):
    report = estimator_asymptotics_study(tar_model, 8000, 2000, UniformPrior(-1, 1), seed=2011)
    assert report.levy_distance <= 0.1
