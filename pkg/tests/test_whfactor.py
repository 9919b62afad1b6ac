import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import MC_SEED, make_bm, make_model_a, make_model_b, random_general_model, random_ph
from ladderkit.model import PhLevyModel, SpectrallyNegativeComponent, cl_roots, levy_exponent, levy_exponent_derivative
from ladderkit.phasetype import exponential
from ladderkit.simulate import simulate_minus_infimum
from ladderkit.whfactor import (
    NonConvergenceError,
    TiltUnavailableError,
    build_embedding,
    contraction_bound,
    phi_minus_matrix,
    psi,
    psi_sub,
    residual,
    solve_ladder,
    solve_tilted,
    tilt_model,
    tilt_root,
)


def test_embedding_model_a():
    emb = build_embedding(make_model_a(), 1.0)
    assert np.allclose(emb.Qa, [[-2.0, 1.0], [1.0, -1.0]])
    assert build_embedding(make_model_a(), 0.0).Qa[0].sum() == pytest.approx(0.0)
    assert build_embedding(make_bm(), 2.0).Qa.shape == (1, 1)


def test_phi_minus_scalar_examples():
    bm = SpectrallyNegativeComponent(0.0, 1.0)
    assert phi_minus_matrix(bm, 2.0, [[0.0]])[0, 0] == pytest.approx(1.0, abs=1e-14)
    assert phi_minus_matrix(bm, 2.0, [[-1.0]])[0, 0] == pytest.approx(2 / 3, abs=1e-14)


def test_phi_minus_removable_singularity():
    # G with eigenvalue -Phi(q): the scalar formula is 0/0 there
    snc = SpectrallyNegativeComponent(0.3, 1.0, 1.0, exponential(2.0))
    from ladderkit.model import phi_root

    phi = phi_root(snc, 1.5)
    val = phi_minus_matrix(snc, 1.5, [[-phi]])[0, 0]
    h = 1e-6
    near = 0.5 * (phi_minus_matrix(snc, 1.5, [[-phi + h]])[0, 0] + phi_minus_matrix(snc, 1.5, [[-phi - h]])[0, 0])
    assert val == pytest.approx(near, abs=1e-9)


def test_phi_minus_matrix_against_monte_carlo():
    model = make_model_a()
    a = 1.0
    q = a + model.up_rate
    eta = np.zeros(2)
    for _ in range(3):
        eta = psi(model, a, eta)
    from ladderkit.model import phi_root

    phi = phi_root(model.minus, q)
    G = np.array([[-phi, 0.0], [1.0, -1.0]]) + np.outer([phi, 0.0], eta)
    got = phi_minus_matrix(model.minus, q, G)
    y = simulate_minus_infimum(model.minus, q, 100_000, MC_SEED)
    lam, V = np.linalg.eig(G)
    Vi = np.linalg.inv(V)
    # e^{G y} entry (i, j) = sum_k V[i,k] e^{lam_k y} Vi[k,j]
    E = np.exp(np.outer(y, lam))
    for i in range(2):
        for j in range(2):
            samples = (E * (V[i] * Vi[:, j])).sum(axis=1).real
            se = samples.std(ddof=1) / math.sqrt(y.size)
            assert abs(samples.mean() - got[i, j]) <= 3 * se + 1e-12


def test_psi_zero_without_up_jumps():
    assert np.all(psi(make_bm(), 1.0, np.zeros(1)) == 0.0)


def test_psi_positive_at_zero():
    v = psi(make_model_a(), 1.0, np.zeros(2))
    assert np.all(v > 0) and v.sum() < 1


def test_psi_sub_examples():
    assert psi_sub(make_model_b(), 1.0, np.zeros(1))[0] == pytest.approx(0.4, abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 2.0))
def test_psi_monotone(seed, a):
    rng = np.random.default_rng(seed)
    model = random_general_model(rng, 2)
    lo = rng.dirichlet(np.ones(4))[:3] * rng.uniform(0, 1)
    hi = lo + rng.dirichlet(np.ones(4))[:3] * (1 - lo.sum())
    assert np.all(psi(model, a + 0.01, lo) <= psi(model, a + 0.01, hi) + 1e-13)


def test_solve_examples():
    sol = solve_ladder(make_bm(), 2.0)
    assert sol.Qplus == pytest.approx(np.array([[-2.0]]))
    sol = solve_ladder(make_model_b(), 1.0)
    assert sol.Qplus[0, 0] == pytest.approx(-1 / math.sqrt(3), abs=1e-12)
    sol = solve_ladder(make_model_a(), 1.0)
    assert sol.residual < 1e-10


def test_residual_sensitivity():
    model = make_model_a()
    sol = solve_ladder(model, 1.0)
    sol.Qplus = sol.Qplus.copy()
    sol.Qplus[0, 1] += 0.1
    assert residual(model, 1.0, sol) > 1e-3


def test_residual_without_up_jumps():
    sol = solve_ladder(make_bm(), 2.0)
    assert residual(make_bm(), 2.0, sol) < 1e-14


def test_qplus_spectrum_is_minus_roots():
    model = make_model_a()
    sol = solve_ladder(model, 1.0)
    ev = np.sort(np.linalg.eigvals(sol.Qplus).real)
    roots = np.sort(-cl_roots(model, 1.0).positive_roots.real)
    assert ev == pytest.approx(roots, abs=1e-10)


def test_contraction_bound_examples():
    assert contraction_bound(make_model_a(), 1.0) == pytest.approx(0.5, abs=1e-12)
    snc = SpectrallyNegativeComponent(0.5, 1.0, 1.0, exponential(3.0))
    assert contraction_bound(PhLevyModel(snc, 1.0, exponential(1.0)), 0.5) < 1
    small = PhLevyModel.build(sigma2=1.0, up_rate=1e-9, up_law=exponential(1.0))
    assert contraction_bound(small, 1.0) < 1e-8


def test_non_convergence_reports_step():
    with pytest.raises(NonConvergenceError) as info:
        solve_ladder(make_model_a(), 1.0, max_iter=2)
    assert info.value.last_step > 0


def test_solution_to_dict():
    d = solve_ladder(make_model_a(), 1.0).to_dict()
    for key in ("eta", "Qplus", "Mplus", "mplus", "phi", "iterations", "residual"):
        assert key in d


def test_critical_general_case():
    model = PhLevyModel.build(drift=-1.0, sigma2=1.0, up_rate=1.0, up_law=exponential(1.0))
    sol = solve_ladder(model, 0.0)
    assert sol.eta.sum() == pytest.approx(1.0, abs=1e-10)
    assert sol.residual < 1e-9
    assert "newton" in sol.diagnostics["method"]


def test_tilt_zero_is_identity():
    m = make_model_a(drift=-2.0)
    t = tilt_model(m, 0.0)
    grid = (0.1, 0.3, 0.5j)
    assert np.allclose([levy_exponent(t, s) for s in grid], [levy_exponent(m, s) for s in grid], atol=1e-14)
    assert np.allclose(t.up_law.T, m.up_law.T) and t.up_rate == pytest.approx(m.up_rate)


def test_tilt_examples():
    m = make_model_a(drift=-2.0)
    g = tilt_root(m)
    assert g == pytest.approx((5 - math.sqrt(17)) / 2, abs=1e-12)
    t = tilt_model(m, g)
    assert t.minus.drift == pytest.approx(-2.0 + g, abs=1e-12)
    assert levy_exponent_derivative(m, g) > 0


def test_solve_tilted_requires_negative_drift():
    with pytest.raises(TiltUnavailableError):
        solve_tilted(make_model_a(), 0.0)


def test_tilted_route_with_down_jumps():
    snc = SpectrallyNegativeComponent(-0.5, 0.8, 1.0, exponential(2.0))
    model = PhLevyModel(snc, 0.7, exponential(1.5))
    assert model.path_class.value == "General"
    sol0 = solve_ladder(model, 0.0)
    assert sol0.diagnostics["method"] == "tilted"
    assert sol0.residual < 1e-9
    a = 0.3
    assert np.abs(solve_ladder(model, a).eta - solve_tilted(model, a).eta).max() < 1e-8


def test_subordinator_tilted_route():
    snc = SpectrallyNegativeComponent(-0.2, 0.0, 1.5, exponential(1.0))
    model = PhLevyModel(snc, 1.0, exponential(2.0))
    sol = solve_ladder(model, 0.0)
    assert sol.diagnostics["method"] == "tilted"
    assert sol.residual < 1e-9
    assert np.abs(solve_ladder(model, 0.4).eta - solve_tilted(model, 0.4).eta).max() < 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 3), st.floats(0.05, 3.0))
def test_random_general_solution(seed, m, a):
    model = random_general_model(np.random.default_rng(seed), m)
    sol = solve_ladder(model, a)
    assert sol.residual <= 1e-10 * max(1.0, np.abs(sol.Qplus).max()) ** 2
    assert np.all(sol.eta >= 0) and sol.eta.sum() <= 1 + 1e-12
    ev = np.sort_complex(np.linalg.eigvals(sol.Qplus))
    roots = np.sort_complex(-cl_roots(model, a).positive_roots)
    assert np.abs(ev - roots).max() < 1e-7 * max(1.0, np.abs(roots).max())


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 3), st.floats(0.05, 3.0))
def test_random_subordinator_solution(seed, m, a):
    rng = np.random.default_rng(seed)
    snc = SpectrallyNegativeComponent(-rng.uniform(0, 1), 0.0, rng.uniform(0.2, 2), random_ph(rng, 2))
    model = PhLevyModel(snc, rng.uniform(0.2, 2), random_ph(rng, m))
    sol = solve_ladder(model, a)
    assert sol.residual <= 1e-10
    assert np.all(sol.eta >= 0) and sol.eta.sum() < 1
