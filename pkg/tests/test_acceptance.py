"""Acceptance criteria, each run at its stated tolerance.

Every test records a single ``CRITERION k PASS/FAIL`` line, printed again in
the terminal summary.  Monte Carlo criteria use the pre-registered seed 2011.
"""

import math
import time

import numpy as np
import pytest

from cplab.distributions import CompoundPoissonLaw, InnovationDensity, JumpLaw
from cplab.errors import UnidentifiableModelError
from cplab.markov import ARModel, Drift, TARModel, simulate_chain, solve_invariant_density
from cplab.metrics import EmpiricalLaw, levy_distance, rate_study, theoretical_rate_bound
from cplab.streams import stream
from cplab.threshold import (
    UniformPrior,
    bayes_estimate,
    bayes_estimate_grid,
    estimator_asymptotics_study,
    limit_draws,
    log_likelihood,
    log_Zn,
)
from cplab.triangular import audit_assumptions

from test_harness import SMALL, invoke, result_bodies

SEED = 2011
GAUSS = InnovationDensity("gaussian", 1.0)
RATE_GRID = [100, 300, 1000, 3000]


def identifiable_tar():
    # the TAR paths of criteria 1 and 8 are not pinned down; theta0 = 0.5 keeps delta(theta0) = 0.5
    return TARModel(Drift.linear(0.5), Drift.linear(-0.5), 0.5, -1.0, 1.0, GAUSS)


def check(criterion, key, ok, detail):
    criterion(key, ok, detail)
    assert ok, detail


def test_c01_log_zn_identity(criterion):
    model = identifiable_tar()
    n = 500
    start = time.perf_counter()
    worst = 0.0
    for i in range(100):
        path = simulate_chain(model, n, rng=stream(SEED, "c1", i))
        base = log_likelihood(path.states, model, 0.5)
        for u in stream(SEED, "c1-u", i).uniform(n * (-1.0 - 0.5), n * (1.0 - 0.5), 20) * (1 - 1e-9):
            direct = log_likelihood(path.states, model, 0.5 + u / n) - base
            worst = max(worst, abs(log_Zn(path, model, 0.5, u) - direct))
    secs = time.perf_counter() - start
    check(criterion, "1", worst <= 1e-9 and secs < 10, f"max |error| = {worst:.2e} (<= 1e-9), {secs:.1f} s (< 10 s)")


def test_c02_invariant_density(criterion):
    start = time.perf_counter()
    errs = {}
    for rho in (0.0, 0.3, 0.6):
        inv = solve_invariant_density(ARModel(Drift.linear(rho), GAUSS))
        errs[rho] = abs(inv(0.0) - math.sqrt(1 - rho * rho) / math.sqrt(2 * math.pi))
    flat = solve_invariant_density(ARModel(Drift.zero(), GAUSS))
    flat_err = float(np.max(np.abs(flat.values - GAUSS.pdf(flat.grid))))
    secs = time.perf_counter() - start
    ok = max(errs.values()) <= 1e-3 and flat.iterations == 1 and flat_err <= 1e-10 and secs < 30
    detail = (
        f"p(0) errors {', '.join(f'rho={r}: {e:.1e}' for r, e in errs.items())} (<= 1e-3); "
        f"h=0: {flat.iterations} sweep, |p - q| = {flat_err:.1e} (<= 1e-10); {secs:.1f} s (< 30 s)"
    )
    check(criterion, "2", ok, detail)


def test_c03_sampler_cf(criterion):
    laws = {
        "Poisson(1)": CompoundPoissonLaw(1.0, JumpLaw.constant(GAUSS, 1.0)),
        "CP(0.5, N(0,1))": CompoundPoissonLaw(0.5, JumpLaw.affine(GAUSS, 1.0)),
        "CP(2, log-ratio logistic)": CompoundPoissonLaw(2.0, JumpLaw.log_ratio(InnovationDensity("logistic", 1.0), 1.0)),
    }
    M = 100_000
    t = np.linspace(-10, 10, 41)
    tol = 5 / math.sqrt(M)
    start = time.perf_counter()
    errs = {}
    for i, (name, law) in enumerate(laws.items()):
        draws = law.sample(stream(SEED, "c3", i), M)
        errs[name] = float(np.max(np.abs(EmpiricalLaw(draws).cf(t) - law.cf(t))))
    secs = time.perf_counter() - start
    ok = max(errs.values()) <= tol and secs < 10
    detail = f"sup errors {', '.join(f'{k}: {v:.4f}' for k, v in errs.items())} (<= {tol:.4f}); {secs:.1f} s (< 10 s)"
    check(criterion, "3", ok, detail)


@pytest.fixture(scope="module")
def rate_report():
    model = ARModel(Drift.linear(0.5), GAUSS)
    start = time.perf_counter()
    report = rate_study(model, None, RATE_GRID, 10_000, seed=SEED)
    report.meta["seconds"] = time.perf_counter() - start
    return report


@pytest.mark.slow
def test_c04_rate_study(criterion, rate_report):
    L = dict(zip(rate_report.n_grid, rate_report.column("levy_hat")))
    ok = abs(rate_report.intensity - 0.34549) < 5e-6 and L[1000] <= 0.05 and L[3000] < L[100]
    detail = (
        f"p(0) = {rate_report.intensity:.5f}; L(1000) = {L[1000]:.5f} (<= 0.05); "
        f"L(3000) = {L[3000]:.5f} vs L(100) = {L[100]:.5f} (need <); {rate_report.meta['seconds']:.0f} s"
    )
    check(criterion, "4", ok, detail)


@pytest.mark.slow
def test_c05_envelope_ratio(criterion, rate_report):
    ratio = rate_report.column("envelope_ratio")
    ok = ratio[-1] <= 1.5 * ratio[0]
    detail = f"envelope ratio n=3000: {ratio[-1]:.4f}, n=100: {ratio[0]:.4f} (need <= 1.5x = {1.5 * ratio[0]:.4f})"
    check(criterion, "5", ok, detail)


@pytest.mark.slow
def test_c06_zolotarev_dominance(criterion, rate_report):
    L = rate_report.column("levy_hat")
    err = rate_report.column("levy_err")
    zol = rate_report.column("zol_bound")
    ok = bool(np.all(L <= zol + 3 * err))
    detail = "; ".join(f"n={n}: {a:.4f} <= {b:.3f} + 3*{e:.4f}" for n, a, b, e in zip(RATE_GRID, L, zol, err))
    check(criterion, "6", ok, detail)


def test_c07_theoretical_bound(criterion):
    # independent re-derivation at C1=C2=C3=mu=1, r=0.5, b=2, n=1e4, T=100:
    # e^2/pi * (1e-4 + 3 * 2^(-2 log 1e4) + 16 log(1e4)/1e4) * 100 + 2e log(100)/100
    n = 10_000
    logn = math.log(n)
    hand = math.exp(2) / math.pi * (1 / n + 3 * 2 ** (-2 * logn) + 16 * logn / n) * 100 + 2 * math.e * math.log(100) / 100
    args = dict(C1=1, C2=1, C3=1, mu=1, r=0.5, b=2)
    value = theoretical_rate_bound(n=n, **args)
    seq = [theoretical_rate_bound(n=m, **args) for m in (1e4, 1e5, 1e6)]
    ok = abs(value - hand) <= 1e-3 and seq[0] > seq[1] > seq[2]
    detail = (
        f"bound = {value:.6f} vs re-derived {hand:.6f} (tol 1e-3; quoted approximation 3.7434 differs by "
        f"{abs(value - 3.7434):.1e}); n=1e4,1e5,1e6: {', '.join(f'{v:.4f}' for v in seq)}"
    )
    check(criterion, "7", ok, detail)


def test_c08_bayes_oracle(criterion):
    model = identifiable_tar()
    prior = UniformPrior(-1.0, 1.0)
    start = time.perf_counter()
    errs = []
    for i in range(10):
        x = simulate_chain(model, 500, rng=stream(SEED, "c8", i)).states
        errs.append(abs(bayes_estimate(x, model, prior).theta - bayes_estimate_grid(x, model, prior, 100_000).theta))
    secs = time.perf_counter() - start
    ok = max(errs) <= 1e-6 and secs < 30
    detail = f"max |exact - grid| = {max(errs):.2e} over 10 paths (<= 1e-6), worst-first {sorted(errs)[::-1][:3]}; {secs:.1f} s (< 30 s)"
    check(criterion, "8", ok, detail)


@pytest.mark.slow
def test_c09_estimator_asymptotics(criterion):
    stated = dict(g_plus=Drift.linear(0.5), g_minus=Drift.linear(-0.5), theta=0.0, lower=-1.0, upper=1.0, innovation=GAUSS)
    prior = UniformPrior(-1.0, 1.0)
    try:
        model = TARModel(**stated)
    except UnidentifiableModelError as exc:
        # run the stated configuration anyway to report what it gives; the limit
        # has marks log q(e)/q(e) = 0, so Z = 1 and the limit ratio is 0
        model = TARModel(**stated, check_identifiable=False)
        report = estimator_asymptotics_study(model, 2000, 2000, prior, seed=SEED, u_max=650.0)
        shift = levy_distance(
            EmpiricalLaw(limit_draws(2000, SEED, 0.0, GAUSS, report.intensity, 650.0)),
            EmpiricalLaw(limit_draws(2000, SEED, 0.0, GAUSS, report.intensity, 1300.0)),
        )
        detail = (
            f"stated model rejected ({exc}); forced run: Levy distance = {report.levy_distance:.3f} (need <= 0.1), "
            f"U_max doubling shift = {shift:.1e}"
        )
        check(criterion, "9", False, detail)
    report = estimator_asymptotics_study(model, 2000, 2000, prior, seed=SEED)
    check(criterion, "9", report.levy_distance <= 0.1, f"Levy distance = {report.levy_distance:.3f}")


@pytest.mark.slow
def test_c09_supplement_identifiable_variant(criterion):
    model = identifiable_tar()
    prior = UniformPrior(-1.0, 1.0)
    inv = solve_invariant_density(model)
    rep = estimator_asymptotics_study(model, 8000, 2000, prior, seed=SEED, invariant=inv)
    u = rep.u_max
    a = limit_draws(2000, SEED, rep.delta0, GAUSS, rep.intensity, u)
    b = limit_draws(2000, SEED, rep.delta0, GAUSS, rep.intensity, 2 * u)
    shift = levy_distance(EmpiricalLaw(a), EmpiricalLaw(b))
    ok = rep.levy_distance <= 0.1 and shift < 1e-2
    detail = (
        f"theta0=0.5 variant, n=8000, M=2000: Levy distance = {rep.levy_distance:.3f} (<= 0.1); "
        f"U_max {u:.0f} -> {2 * u:.0f} shift = {shift:.1e} (< 1e-2)"
    )
    check(criterion, "9b", ok, detail)


def test_c10_assumption_audit(criterion):
    model = ARModel(Drift.linear(0.5), GAUSS)
    inv = solve_invariant_density(model)
    flagged = {}
    for n in (100, 1000):
        audit = audit_assumptions(model, n, rng=stream(SEED, "c10", n), invariant=inv)
        flagged[n] = audit.violations
    null = ARModel(Drift.linear(0.5), GAUSS, JumpLaw.constant(GAUSS, 0.0))
    null_audit = audit_assumptions(null, 100, rng=stream(SEED, "c10-null"), invariant=inv)
    null_zero = all(e.value == 0.0 for e in null_audit.entries) and not null_audit.violation
    ok = not any(flagged.values()) and null_zero
    detail = f"violations n=100: {flagged[100] or 'none'}, n=1000: {flagged[1000] or 'none'}; f=0 all zero: {null_zero}"
    check(criterion, "10", ok, detail)


def test_c11_determinism(criterion, tmp_path):
    differing = []
    for command, (argv, cfg) in sorted(SMALL.items()):
        _, a = invoke(tmp_path, command, 1, argv, cfg, "w1")
        _, b = invoke(tmp_path, command, 2, argv, cfg, "w2")
        if result_bodies(a) != result_bodies(b):
            differing.append(command)
    ok = not differing
    check(criterion, "11", ok, f"{len(SMALL)} subcommands, workers 1 vs 2; differing: {differing or 'none'}")
