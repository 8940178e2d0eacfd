import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from adiabaticity import bounds as bd
from adiabaticity import frame as fr
from adiabaticity import hamiltonian as hm
from adiabaticity import propagator as pr
from adiabaticity import spectral as sp
from adiabaticity.errors import StepUnderflowError

SLOW = hm.SchwingerParams(10.0, 0.01, 1.0)


def reference_state(model, psi0, times):
    """Schroedinger evolution by an explicit high-order Runge-Kutta method."""
    N = model.dimension

    def rhs(t, y):
        return -1j * (model.evaluator(t) @ y)

    sol = solve_ivp(rhs, (times[0], times[-1]), psi0.astype(complex), method="DOP853",
                    t_eval=times, rtol=1e-13, atol=1e-13)
    return sol.y.T.reshape(len(times), N)


@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 5), st.floats(1e-3, 30.0))
def test_hermitian_exponential(seed, N, scale):
    rng = np.random.default_rng(seed)
    k = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
    k = scale * 0.5 * (k + k.conj().T)
    np.testing.assert_allclose(pr._expm_hermitian(k[None])[0], expm(-1j * k), atol=1e-11 * scale)


def test_scheme_is_fourth_order():
    model = hm.random_smooth(3, seed=1, t_span=(0.0, 2.0))
    psi0 = np.array([1.0, 0.0, 0.0], dtype=complex)
    ref = reference_state(model, psi0, np.array([0.0, 2.0]))[-1]
    errs = []
    counts = (25, 50, 100, 200)
    for n in counts:
        t = np.linspace(0.0, 2.0, n + 1)
        steps = pr._cf4_steps(model, t[:-1], np.diff(t))
        psi = psi0
        for s in steps:
            psi = s @ psi
        errs.append(np.linalg.norm(psi - ref))
    slope = -np.polyfit(np.log(counts), np.log(errs), 1)[0]
    assert slope == pytest.approx(4.0, abs=0.3)


def test_evolve_against_runge_kutta():
    model = hm.random_smooth(3, seed=4)
    grid = np.linspace(0, 4, 41)
    U = pr.evolve(model, grid, tol=1e-11)
    psi0 = np.array([0.0, 1.0, 0.0], dtype=complex)
    np.testing.assert_allclose(U @ psi0, reference_state(model, psi0, grid), atol=1e-9)
    assert np.max(pr.unitarity_error(U)) <= pr.UNITARITY_TOL


def test_tolerance_halving_converges():
    model = hm.schwinger(10.0, 0.3, 4.0, (0.0, 6.0))
    grid = np.linspace(0, 6, 7)
    tol = 1e-8
    a = pr.evolve(model, grid, tol)[-1][:, 0]
    b = pr.evolve(model, grid, tol / 2)[-1][:, 0]
    assert 1 - abs(np.vdot(a, b)) < 10 * tol


def test_step_underflow():
    fast = hm.schwinger(1e15, 0.5, 1e15, (0.0, 1.0))
    with pytest.raises(StepUnderflowError):
        pr.evolve(fast, [0.0, 1.0], tol=1e-12)


def test_constant_model_is_stationary():
    m = hm.constant(np.diag([0.0, 1.0, 3.0]), (0.0, 5.0))
    curve = sp.eigencurves(m, np.linspace(0, 5, 51), sp.BERRY_DYNAMICAL)
    evo = pr.propagate(m, curve, 1)
    np.testing.assert_allclose(evo.fidelity, 1.0, atol=1e-14)
    np.testing.assert_allclose(evo.phase_mismatch, 0.0, atol=1e-12)
    np.testing.assert_allclose(evo.projector_distance, 0.0, atol=1e-14)


def test_schwinger_closed_form_basics():
    I = np.eye(2)
    np.testing.assert_allclose(pr.schwinger_analytic(SLOW, 0.0), I, atol=1e-15)
    U = pr.schwinger_analytic(SLOW, np.linspace(0, 10, 11))
    np.testing.assert_allclose(U @ np.swapaxes(U.conj(), 1, 2), np.broadcast_to(I, U.shape),
                               atol=1e-14)
    theta = 0.3
    res = hm.SchwingerParams(1.0, theta, 1.0 / np.cos(theta))
    assert res.delta_prime == pytest.approx(0.0, abs=1e-15)
    Up = pr.schwinger_analytic(res, np.pi / abs(res.omega_prime), frame="adiabatic")
    assert abs(Up[1, 1]) < 1e-15


def test_schwinger_lab_frame_round_trip():
    t = np.linspace(0, 3, 7)
    U = pr.schwinger_analytic(SLOW, t)
    P = pr.schwinger_frame_matrix(SLOW, t)
    P0 = pr.schwinger_frame_matrix(SLOW, 0.0)
    Up = np.swapaxes(P.conj(), 1, 2) @ U @ P0
    np.testing.assert_allclose(Up, pr.schwinger_analytic(SLOW, t, frame="adiabatic"), atol=1e-14)
    # the columns of P are eigenvectors of H(t)
    H = hm.schwinger(10.0, 0.01, 1.0, (0, 3)).eval(t)
    np.testing.assert_allclose(H @ P, P * np.array([-5.0, 5.0]), atol=1e-13)


def test_schwinger_numeric_matches_closed_form():
    W = SLOW.rabi_frequency
    t_end = 2 * 2 * np.pi / W
    model = hm.schwinger(10.0, 0.01, 1.0, (0.0, t_end))
    grid = np.linspace(0, t_end, 201)
    U = pr.evolve(model, grid, tol=1e-10)
    psi = U[:, :, 0]
    exact = pr.schwinger_analytic(SLOW, grid)[:, :, 0]
    assert np.min(np.abs(np.einsum("ki,ki->k", exact.conj(), psi))) >= 1 - 1e-9


def test_schwinger_fidelity_floor(schwinger_slow):
    model, curve = schwinger_slow
    evo = pr.propagate(model, curve, 1)
    ratio = SLOW.omega_prime / SLOW.rabi_frequency
    assert evo.fidelity.min() >= 1 - ratio ** 2
    assert np.max(evo.fidelity) <= 1 + fr.FIDELITY_TOL
    # 2(1 - F) <= ||psi - e^{i phi} n||^2 for any phase
    assert np.all(2 * (1 - evo.fidelity) <= evo.phase_mismatch ** 2 + 1e-12)


def test_fidelity_is_gauge_independent():
    model = hm.random_smooth(3, seed=3)
    g = np.linspace(0, 4, 201)
    ref = pr.propagate(model, sp.eigencurves(model, g), 0).fidelity
    for gauge in (sp.BERRY_DYNAMICAL, sp.pancharatnam(0)):
        f = pr.propagate(model, sp.eigencurves(model, g, gauge), 0).fidelity
        np.testing.assert_allclose(f, ref, atol=fr.FIDELITY_TOL)


def test_usual_phase_drifts(schwinger_slow):
    model, curve = schwinger_slow
    f = fr.build_frame(curve, 1)
    bw = bd.bw_series(f)
    evo = pr.propagate(model, curve, 1, E_prime_n=bw.E_prime_n)
    kb = bd.key_bound(f, bw)
    assert np.all(evo.phase_mismatch < kb + bd.BOUND_SLACK)
    # the usual phase misses the level shift Delta' = E'_n - H'_nn
    shift = bw.Delta_prime[0]
    d, o = SLOW.delta_prime, SLOW.omega_prime
    assert shift == pytest.approx(0.5 * (np.hypot(d, o) - d), rel=1e-9)
    drift = 2 * np.abs(np.sin(0.5 * shift * curve.grid))
    np.testing.assert_allclose(evo.usual_mismatch, drift, atol=2 * kb.max())
    # far beyond the grid the drift reaches its maximum 2 at t = pi / Delta'
    assert 2 * abs(np.sin(0.5 * shift * np.pi / shift)) == pytest.approx(2.0)
    assert np.pi / shift > 1e5


def test_evolution_csv(tmp_path, schwinger_slow):
    model, curve = schwinger_slow
    evo = pr.propagate(model, curve, 1, t_end=curve.grid[50])
    assert len(evo.grid) == 51
    p = tmp_path / "e.csv"
    evo.to_csv(p)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["t", "fidelity", "phase_mismatch", "projector_distance"]
    assert float(rows[-1][1]) == evo.fidelity[-1]


def test_landau_zener_formula():
    p = hm.CyclingLZParams(100.0, 1.0, 17.0)
    assert pr.landau_zener_p1(p) == pytest.approx(np.exp(-0.5 * np.pi * 289 / 100), rel=1e-15)


def test_deep_adiabatic_limit():
    p = hm.CyclingLZParams(40.0, 1.0, 25.0)
    pred, meas = pr.lz_multipassage(p, [2, 4])
    assert pred.p1 < 1e-10
    assert max(meas.values()) < 1e-6


def test_multipassage_matches_period_power():
    p = hm.CyclingLZParams(20.0, 1.0, 6.0)
    pred, meas = pr.lz_multipassage(p, [2, 4, 6])
    T = 2 * p.half_period
    model = hm.cycling_lz(p.alpha, p.varpi, p.Omega, (0.0, T))
    U1 = pr.evolve(model, [0.0, T], 1e-11)[-1]
    v0 = np.linalg.eigh(model.eval(0.0).real)[1][:, 0]
    for M in (2, 4, 6):
        psi = np.linalg.matrix_power(U1, M // 2) @ v0
        # H(M T1) = H(0) for even M
        assert meas[M] == pytest.approx(1 - abs(np.vdot(v0, psi)) ** 2, abs=1e-8)
    assert abs(np.linalg.det(U1) - 1) < 1e-9
    assert set(pred.pM) == {2, 4, 6}


def test_prediction_sign_invariant():
    p = hm.CyclingLZParams(20.0, 1.0, 6.0)
    a = pr.stueckelberg_prediction(p, [2, 4], Theta=0.4)
    b = pr.stueckelberg_prediction(p, [2, 4], Theta=-0.4 + np.pi)
    assert a.pM == pytest.approx(b.pM, rel=1e-12)
    assert a.at(4) == pytest.approx(a.pM[4])


def test_multipassage_rejects_odd():
    with pytest.raises(ValueError):
        pr.lz_multipassage(hm.CyclingLZParams(20.0, 1.0, 6.0), 3)


def test_rescaled_identity_and_schwinger():
    m = hm.schwinger(10.0, 0.01, 1.0, (0.0, 2.0))
    assert pr.rescaled_evolution(m, 1.0) is m
    r = pr.rescaled_evolution(m, 0.25)
    assert r.domain == (0.0, 8.0)
    assert r.params["schwinger"].omega == 0.25
    t = np.array([0.3, 5.0])
    np.testing.assert_allclose(r.eval(t), hm.schwinger(10.0, 0.01, 0.25, (0, 8)).eval(t),
                               atol=1e-14)
    np.testing.assert_allclose(r.eval_derivative(t, 1), 0.25 * m.eval_derivative(0.25 * t, 1),
                               atol=1e-15)
    with pytest.raises(ValueError):
        pr.rescaled_evolution(m, 0.0)


def test_rescaled_interpolating_halves_integral():
    m = hm.interpolating(np.array([[0.0, 0.3], [0.3, 1.0]]), np.array([[1.0, 0.3], [0.3, 0.0]]),
                         5.0)
    vals = []
    for eps in (1.0, 0.5):
        r = pr.rescaled_evolution(m, eps)
        assert r.params.get("interpolating", m.params["interpolating"]).T == pytest.approx(5.0 / eps)
        g = np.linspace(0, 5.0 / eps, 401)
        vals.append(bd.jrs_bound(r, sp.eigencurves(r, g), 0, g[-1], part="integral"))
    assert vals[1] / vals[0] == pytest.approx(0.5, rel=1e-10)
