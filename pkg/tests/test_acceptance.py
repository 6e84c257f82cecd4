"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

import conftest
from oracles import CHEMOSTAT, FISHER_DECAY, logistic
from test_spectrum import scalar_instances
from wavefront.heteroclinic import check_positive, compute_heteroclinic, fit_decay
from wavefront.models import Chemostat, fisher_kpp_delay, logistic_no_delay
from wavefront.pde import validate_profile
from wavefront.profile import distance_to, kernel_exponents, solve_profile, verify_front
from wavefront.spectrum import CharProblem, charpoly, count_roots_rect, first_order_matrix


def report(capsys, n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    conftest.ACCEPTANCE[n] = line
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def test_criterion_1_fisher_decay_law(fisher, capsys):
    parts, ok = [], True
    for c in (4.0, 6.0, 10.0):
        params = fisher.params(c)
        start = time.perf_counter()
        prof = solve_profile(fisher.model, c, fisher.het, fisher.fit, params=params)
        rep = verify_front(prof, params)
        elapsed = time.perf_counter() - start
        err = abs(rep.lambda_fit - FISHER_DECAY[c]) / FISHER_DECAY[c]
        ok &= err <= 0.02 and elapsed <= 120
        parts.append(f"c={c:g} fit={rep.lambda_fit:.6f} oracle={FISHER_DECAY[c]:.6f} rel={err:.1e} {elapsed:.1f}s")
    report(capsys, 1, ok, "; ".join(parts))


def test_criterion_2_positivity(fisher, chemostat, capsys):
    parts, ok = [], True
    for name, pipe, speeds in (("fisher", fisher, (4.0, 6.0, 10.0)), ("chemostat", chemostat, (10.0, 15.0, 20.0))):
        for c in speeds:
            prof, params = pipe.profile(c)
            rep = verify_front(prof, params)
            good = rep.positive and rep.monotone_left
            ok &= good
            parts.append(f"{name} c={c:g} {'ok' if good else 'violation ' + str(rep.violation)}")
    report(capsys, 2, ok, "; ".join(parts))


def test_criterion_3_logistic_heteroclinic(capsys):
    from scipy.optimize import minimize_scalar

    start = time.perf_counter()
    traj = compute_heteroclinic(logistic_no_delay(), 1.0, [1.0], h=0.01)
    exact = np.vectorize(logistic)

    def err(t0):
        return float(np.max(np.abs(traj.values[:, 0] - exact(traj.t - t0))))

    opt = minimize_scalar(err, bounds=(-0.5, 0.5), method="bounded", options={"xatol": 1e-12})
    elapsed = time.perf_counter() - start
    ok = opt.fun <= 1e-6 and elapsed <= 5
    report(capsys, 3, ok, f"max error {opt.fun:.2e} at shift {opt.x:.2e}, {elapsed:.2f}s")


def test_criterion_4_decay_decomposition(capsys):
    start = time.perf_counter()
    model = fisher_kpp_delay()
    traj = compute_heteroclinic(model, 1.0, [1.0])
    fit = fit_decay(traj, K=model.K)
    elapsed = time.perf_counter() - start
    lam0 = 1.0
    ok = abs(fit.lambda_fit - lam0) <= 0.01 * lam0 and fit.remainder_slope >= 1.5 * lam0 and elapsed <= 30
    ok &= check_positive(traj)[0]
    report(capsys, 4, ok, f"lambda_fit={fit.lambda_fit:.8f} remainder slope={fit.remainder_slope:.3f} "
                          f"window={fit.window} {elapsed:.1f}s")


def test_criterion_5_spectrum_identities(capsys):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    model = Chemostat()
    worst = 0.0
    for _ in range(100):
        eps = rng.uniform(0.05, 1.0)
        s = complex(*rng.normal(scale=3.0, size=2))
        p = CharProblem(model.linearization("zero"), eps, (1.0, 1.0))
        lhs = charpoly(p, s)
        rhs = eps ** (2 * p.N) * np.linalg.det(first_order_matrix(p, s))
        worst = max(worst, abs(lhs - rhs) / abs(lhs))
    ab = 0.0
    for eps in rng.uniform(1e-3, 5.0, size=100):
        a, b, _ = kernel_exponents(eps)
        ab = max(ab, abs((a + b) * eps**2 - 1), abs(a * b * eps**2 + 1))
    counts = [(count_roots_rect(prob, rect), expected) for prob, rect, expected in scalar_instances(50, 7)]
    matched = sum(k == e for k, e in counts)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and ab <= 1e-12 and matched == 50 and elapsed <= 30
    report(capsys, 5, ok, f"det identity worst rel {worst:.1e}; alpha/beta worst {ab:.1e}; "
                          f"counts {matched}/50 exact; {elapsed:.1f}s")


def test_criterion_6_chemostat(capsys):
    start = time.perf_counter()
    model = Chemostat()
    D, tau = model.D, model.tau
    eq_err = abs(model.uptake(model.S_bar) - D * math.exp(D * tau))
    u_err = abs(model.K[1] - math.exp(-D * tau) * (model.S0 - model.S_bar))
    pipe = conftest.Pipeline(model, [15.0])
    prof, params = pipe.profile(15.0)
    rep = verify_front(prof, params)
    elapsed = time.perf_counter() - start
    fit_err = abs(rep.lambda_fit - CHEMOSTAT["lambda_eps"][15.0]) / CHEMOSTAT["lambda_eps"][15.0]
    ok = (model.uptake(model.S0) == pytest.approx(2.0, rel=1e-15) and eq_err <= 1e-10 and u_err <= 1e-15
          and abs(pipe.spectrum.lambda0 - 0.486) <= 1e-3 and rep.positive and fit_err <= 0.02 and elapsed <= 180)
    report(capsys, 6, ok, f"|F(S_bar)-De^(Dtau)|={eq_err:.1e} |u_bar-formula|={u_err:.1e} "
                          f"lambda0={pipe.spectrum.lambda0:.6f} lambda_fit(c=15)={rep.lambda_fit:.6f} "
                          f"rel={fit_err:.1e} positive={rep.positive} {elapsed:.1f}s")


def test_criterion_7_pde_cross_validation(fisher, capsys):
    prof, _ = fisher.profile(6.0)
    start = time.perf_counter()
    rep, _ = validate_profile(fisher.model, prof, 6.0, t_end=5.0, dx=0.05)
    elapsed = time.perf_counter() - start
    ok = rep["l2_rel_final"] <= 1e-2 and 5.7 <= rep["speed"] <= 6.3 and elapsed <= 180
    report(capsys, 7, ok, f"speed={rep['speed']:.5f} (R^2={rep['r2']:.6f}) rel L2={rep['l2_rel_final']:.2e} "
                          f"{elapsed:.1f}s")


def test_criterion_8_limit_trend(fisher, capsys):
    start = time.perf_counter()
    mu = fisher.params(6.0).mu
    dist = [distance_to(fisher.profile(c)[0], fisher.het, fisher.fit, mu) for c in (6.0, 12.0, 24.0)]
    elapsed = time.perf_counter() - start
    ok = dist[0] > dist[1] > dist[2] and elapsed <= 300
    report(capsys, 8, ok, "distances " + ", ".join(f"c={c:g}: {d:.3e}" for c, d in zip((6, 12, 24), dist)))
