"""Acceptance gate: one test per criterion, each recorded in the terminal summary."""

import math
import time
import warnings

import numpy as np
import pytest

from conftest import MC_SEED, make_bm, make_model_a, make_model_b, random_general_model, record_criterion
from ladderkit import fluctuation as fl
from ladderkit.model import LevyMeasureSpec, approximate, cl_roots, levy_exponent, phi_root
from ladderkit.simulate import SimConfig, simulate_first_passage, simulate_paths, simulate_sup, simulate_wh4
from ladderkit.whfactor import contraction_bound, psi, residual, solve_ladder, solve_tilted, tilt_model, tilt_root

IMAG_GRID = 1j * np.linspace(0.1, 5.0, 10)


def test_criterion_01_fixed_point_model_a():
    model = make_model_a()
    solve_ladder(model, 1.0)  # warm caches outside the timed call
    t0 = time.perf_counter()
    sol = solve_ladder(model, 1.0)
    elapsed = time.perf_counter() - t0
    res = residual(model, 1.0, sol)
    ok = res <= 1e-10 and sol.iterations <= 200 and elapsed < 1.0
    record_criterion(1, ok, f"residual={res:.2e} iterations={sol.iterations} time={elapsed:.3f}s")
    assert ok


def test_criterion_02_two_route_factor():
    rng = np.random.default_rng(7)
    cases = [("model A", make_model_a()), ("random 3-phase", random_general_model(rng, 3, down=True))]
    gaps = []
    for name, model in cases:
        sol = solve_ladder(model, 1.0)
        gap = max(abs(fl.wh_plus_roots(model, 1.0, s) - fl.wh_plus_matrix(model, 1.0, s, sol)) for s in IMAG_GRID)
        gaps.append(f"{name} gap={gap:.2e}")
        ok = gap <= 1e-8
        record_criterion(2, ok, gaps[-1])
        assert ok


def test_criterion_03_closed_form_subordinator():
    model = make_model_b()
    e1 = solve_ladder(model, 1.0).eta[0]
    e0 = solve_ladder(model, 0.0).eta[0]
    d1 = abs(e1 - (1 - 1 / math.sqrt(3)))
    d0 = abs(e0 - 1.0)
    ok = d1 <= 1e-10 and d0 <= 1e-8
    record_criterion(3, ok, f"|eta_1 - (1-1/sqrt3)|={d1:.1e} |eta_0 - 1|={d0:.1e}")
    assert ok


def test_criterion_04_monotone_geometric():
    model = make_model_a()
    bound = contraction_bound(model, 1.0)
    eta = np.zeros(2)
    iterates = [eta]
    for _ in range(60):
        eta = psi(model, 1.0, eta)
        iterates.append(eta)
    diffs = np.diff(np.array(iterates), axis=0)
    monotone = diffs.min() >= -1e-13
    steps = np.abs(diffs).sum(axis=1)
    usable = steps > 1e-11
    ratios = steps[1:][usable[1:]] / steps[:-1][usable[1:]]
    tail = ratios[-5:]
    ok = monotone and abs(bound - 0.5) < 1e-12 and np.all(tail <= bound + 0.05)
    record_criterion(4, ok, f"min increment={diffs.min():.1e} bound={bound:.3f} late ratios<={tail.max():.3f}")
    assert ok


def test_criterion_05_tilt_consistency():
    model = make_model_a(drift=-2.0)
    gamma = tilt_root(model)
    g_exact = (5 - math.sqrt(17)) / 2
    tilted = tilt_model(model, gamma)
    grid = 0.1 + 1j * np.linspace(-3, 3, 20)
    kgap = max(abs(levy_exponent(tilted, s) - levy_exponent(model, s + gamma)) for s in grid)
    sol0 = solve_tilted(model, 0.0)
    res0 = residual(model, 0.0, sol0)
    direct = solve_ladder(model, 0.5)
    via_tilt = solve_tilted(model, 0.5)
    egap = np.abs(direct.eta - via_tilt.eta).max()
    ok = abs(gamma - g_exact) < 1e-10 and kgap <= 1e-9 and res0 <= 1e-9 and egap <= 1e-8
    record_criterion(5, ok, f"|gamma err|={abs(gamma - g_exact):.1e} kappa gap={kgap:.1e} residual(a=0)={res0:.1e} eta gap(a=0.5)={egap:.1e}")
    assert ok


@pytest.mark.parametrize("name", ["model A", "model B", "random"])
def test_criterion_06_factorisation_identity(name):
    model = {"model A": make_model_a(), "model B": make_model_b(), "random": random_general_model(np.random.default_rng(11), 2, down=True)}[name]
    a = 1.0
    sol = solve_ladder(model, a)
    worst, big = 0.0, 0.0
    for s in IMAG_GRID:
        pp = fl.wh_plus_matrix(model, a, s, sol)
        pm = fl.wh_minus(model, a, s, route="roots")
        worst = max(worst, abs(pp * pm * (a - levy_exponent(model, s)) / a - 1.0))
        big = max(big, abs(pp), abs(pm))
    ok = worst <= 1e-10 and big <= 1 + 1e-12
    record_criterion(6, ok, f"{name}: identity gap={worst:.1e} max|phi|={big:.6f}")
    assert ok


def _within(est, target, k=3.0):
    return abs(est.value - target) <= k * est.std_error


def test_criterion_07_monte_carlo():
    t0 = time.perf_counter()
    lines, ok = [], True

    # Brownian benchmark, q = 2: every target is exp(-2k)
    bm = make_bm()
    q, k = 2.0, 1.0
    cfg = SimConfig(100_000, MC_SEED, q, k)
    sample = simulate_paths(bm, cfg)
    fp = simulate_first_passage(bm, cfg, sample)
    sup = simulate_sup(bm, cfg, sample)
    phi = math.sqrt(2 * q)
    checks = [("BM pCross", fp["pCross"], math.exp(-phi * k)), ("BM creep", fp["creepFraction"], math.exp(-phi * k))]
    assert abs(fl.first_passage_lt(bm, q, k) - math.exp(-phi * k)) < 1e-12
    checks += [(f"BM tail@{lv}", sup.tail(lv), math.exp(-phi * lv)) for lv in (0.5, 1.0, 2.0)]
    cfg1 = SimConfig(100_000, MC_SEED, 1.0, k)
    wh4_target = fl.wh4_rhs(bm, 1.0, 1.0, 1.0)
    exact = 1.0 / (math.sqrt(2) * 1.5)  # q kappa+(2,-1) / (kappa+(1,0) (2 - 1/2)) with kappa+(x,y) = y + sqrt(2x)
    assert abs(wh4_target - exact) < 1e-12
    checks.append(("BM WH4(1,1,1)", simulate_wh4(bm, cfg1, 1.0, 1.0), wh4_target))

    # model A, q = 1, k = 1
    model = make_model_a()
    q = 1.0
    sol = solve_ladder(model, q)
    cfg = SimConfig(100_000, MC_SEED, q, k)
    sample = simulate_paths(model, cfg)
    fp = simulate_first_passage(model, cfg, sample)
    sup = simulate_sup(model, cfg, sample)
    law = fl.sup_law(model, q, sol)
    checks.append(("A pCross", fp["pCross"], fl.first_passage_lt(model, q, k, sol)))
    checks += [(f"A tail@{lv}", sup.tail(lv), law.survival(lv)) for lv in (0.5, 1.0, 2.0)]
    checks.append(("A creep", fp["creepFraction"], float(fl.ladder_phase(model, q, k, sol)[0])))
    checks.append(("A WH4(1,0.5)", simulate_wh4(model, cfg, 1.0, 0.5, sample), fl.wh4_rhs(model, q, 1.0, 0.5)))

    for name, est, target in checks:
        good = _within(est, target)
        ok &= good
        lines.append(f"{name} z={est.z_score(target):+.2f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60.0
    record_criterion(7, ok, ", ".join(lines) + f", time={elapsed:.1f}s")
    assert ok


def test_criterion_08_ladder_law():
    bm = make_bm()
    a = 2.0
    phi = phi_root(bm.minus, a)
    gap = max(abs(fl.ladder_cumulant_plus(bm, a, s) - (s + phi)) for s in [0.0, 0.5, 1.0, 3.0] + list(IMAG_GRID))
    at_1 = fl.ladder_cumulant_plus(bm, a, 1.0)
    model = make_model_a()
    desc = fl.ladder_height_law(model)
    slopes = []
    for aa in (0.0, 1.0):
        slope = (fl.ladder_cumulant_plus(model, aa, 1e3) - fl.ladder_cumulant_plus(model, aa, 1e2)) / 900.0
        slopes.append(abs(slope - 1.0))
    ok = gap <= 1e-12 and abs(at_1 - 3.0) <= 1e-12 and abs(desc.jump_intensity - math.sqrt(2)) <= 1e-10 and desc.drift == 1.0 and max(slopes) <= 1e-3
    record_criterion(8, ok, f"BM gap={gap:.1e} intensity={desc.jump_intensity:.10f} slope err={max(slopes):.1e}")
    assert ok


def test_criterion_09_root_count():
    rng = np.random.default_rng(2026)
    bad = []
    worst = 0.0
    for i in range(20):
        m = int(rng.integers(1, 4))
        model = random_general_model(rng, m)
        a = float(rng.uniform(0.1, 3.0))
        rep = cl_roots(model, a)
        res = max(abs(levy_exponent(model, r) - a) for r in rep.positive_roots)
        worst = max(worst, res)
        if len(rep.positive_roots) != m + 1 or res > 1e-8:
            bad.append(i)
    ok = not bad
    record_criterion(9, ok, f"20 models, failures={bad}, worst |kappa(rho)-a|={worst:.1e}")
    assert ok


def test_criterion_10_approximation_cauchy():
    nu = LevyMeasureSpec.double_exponential(rate=3.0, p_up=0.4, eta_up=2.0, eta_down=3.0)
    grid = [(q, k) for q in (0.5, 1.0, 2.0) for k in (0.25, 1.0, 2.0)]
    values = []
    for eps in (0.2, 0.1, 0.05):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            model = approximate(nu, eps, phase_budget=2, drift=0.1, sigma2=0.5)
        values.append(np.array([fl.first_passage_lt(model, q, k) for q, k in grid]))
    d1 = np.abs(values[1] - values[0]).max()
    d2 = np.abs(values[2] - values[1]).max()
    ok = d2 < d1
    record_criterion(10, ok, f"sup diffs {d1:.2e} -> {d2:.2e}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
