"""Acceptance suite.

Each test prints one ``criterion k: PASS|FAIL`` line and then asserts.  A
criterion that fails here fails for a reason recorded by the maintainers;
tolerances are never relaxed to make it pass.
"""
import time

import numpy as np
import pytest
from scipy.integrate import quad

from adiabaticity import bounds as bd
from adiabaticity import cli
from adiabaticity import frame as fr
from adiabaticity import hamiltonian as hm
from adiabaticity import propagator as pr
from adiabaticity import spectral as sp
from adiabaticity._numerics import cumulative_integral

OMEGA0, THETA = 10.0, 0.01
TWO_LEVEL = ("schwinger-adiabatic", "schwinger-resonant", "cycling-constructive",
             "cycling-destructive")


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {k}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail
    return emit


def schwinger_run(omega, t_end, samples=2001, tol=1e-9):
    model = hm.schwinger(OMEGA0, THETA, omega, (0.0, t_end))
    curve = sp.eigencurves(model, np.linspace(0, t_end, samples), sp.pancharatnam(1))
    return model, curve, pr.propagate(model, curve, 1, tol=tol)


def scenario_frame(name):
    scn = cli.load_scenario(name)
    model = cli.build_model(scn)
    curve = sp.eigencurves(model, cli.build_grid(scn, model), scn.gauge)
    return scn, model, curve, fr.build_frame(curve, scn.tracked_level)


def test_criterion_1_sufficiency_failure(report):
    start = time.perf_counter()
    slow = hm.SchwingerParams(OMEGA0, THETA, 1.0)
    res = hm.SchwingerParams(OMEGA0, THETA, OMEGA0)
    _, c_slow, e_slow = schwinger_run(1.0, 2 * 2 * np.pi / slow.rabi_frequency)
    _, c_res, e_res = schwinger_run(OMEGA0, 2 * np.pi / abs(res.omega_prime))
    elapsed = time.perf_counter() - start
    std_slow = fr.standard_criterion(c_slow, 1)
    std_res = fr.standard_criterion(c_res, 1)
    # the closed form |omega sin(theta)| / omega0 of the standard criterion
    form_slow, form_res = abs(np.sin(THETA)) / OMEGA0, abs(OMEGA0 * np.sin(THETA)) / OMEGA0
    exact = pr.schwinger_analytic(res, c_res.grid) @ c_res.vectors[0, :, 1]
    f_exact = np.abs(np.einsum("ki,ki->k", c_res.vectors[:, :, 1].conj(), exact))
    checks = {
        "standard matches |w sin th|/w0 (slow)": np.max(np.abs(std_slow - form_slow)) < 1e-8,
        "standard matches |w sin th|/w0 (resonant)": np.max(np.abs(std_res - form_res)) < 1e-8,
        "slow value ~1.0e-3": abs(std_slow.max() - 1.0e-3) < 1e-5,
        "resonant value stays small": std_res.max() < 0.1,
        "slow min fidelity >= 0.999": e_slow.fidelity.min() >= 0.999,
        "resonant min fidelity < 0.05": e_res.fidelity.min() < 0.05,
        "resonant fidelity matches closed form": np.max(np.abs(e_res.fidelity - f_exact)) < 1e-8,
        "runtime < 5 s": elapsed < 5.0,
    }
    bad = [k for k, v in checks.items() if not v]
    report(1, not bad,
           f"standard {std_slow.max():.4g} / {std_res.max():.4g}, min fidelity "
           f"{e_slow.fidelity.min():.8f} / {e_res.fidelity.min():.4g}, {elapsed:.2f} s"
           + (f"; failed: {bad}" if bad else ""))


def test_criterion_2_generalized_closed_form(report):
    worst, verdicts = 0.0, []
    for omega, t_end in ((1.0, 4 * np.pi), (OMEGA0, 20 * np.pi)):
        model, curve, evo = schwinger_run(omega, t_end)
        g = fr.generalized_criterion(fr.build_frame(curve, 1))
        form = abs(omega * np.sin(THETA)) / abs(OMEGA0 - omega * np.cos(THETA))
        worst = max(worst, np.max(np.abs(g - form)))
        predicted = g.max() <= cli.DEFAULT_THRESHOLDS["criteria"]
        measured = 1 - evo.fidelity.min() <= cli.DEFAULT_THRESHOLDS["infidelity"]
        verdicts.append((g.max(), predicted, measured))
    ok = worst <= 1e-8 and all(p == m for _, p, m in verdicts)
    report(2, ok, f"max |generalized - closed form| = {worst:.2e}; "
                  + ", ".join(f"max {v:.4g} predicts {'adiabatic' if p else 'non-adiabatic'}, "
                              f"measured {'adiabatic' if m else 'non-adiabatic'}"
                              for v, p, m in verdicts))


def test_criterion_3_zeno_equality(report):
    theta = 0.3
    p = hm.SchwingerParams(1.0, theta, 1.0 / np.cos(theta))
    W = abs(p.omega_prime)
    t_half = np.pi / W
    model = hm.schwinger(p.omega0, theta, p.omega, (0.0, t_half))
    grid = np.linspace(0, t_half, 401)
    curve = sp.eigencurves(model, grid)
    evo = pr.propagate(model, curve, 1, tol=1e-11)
    target = 1 - np.cos(W * grid / 2)
    err = np.max(np.abs((1 - evo.fidelity) - target))
    zeno, _ = bd.zeno_bound(fr.build_frame(curve, 1))
    bound_err = np.max(np.abs(zeno - target))
    # generic detuning: the bound must dominate everywhere
    rng = np.random.default_rng(3)
    excess = -np.inf
    for _ in range(6):
        th, om = rng.uniform(0.05, 1.2), rng.uniform(0.2, 3.0)
        q = hm.SchwingerParams(1.0, th, om)
        T = 2 * np.pi / q.rabi_frequency
        m = hm.schwinger(1.0, th, om, (0.0, T))
        c = sp.eigencurves(m, np.linspace(0, T, 401))
        f = fr.build_frame(c, 1)
        e = pr.propagate(m, c, 1, tol=1e-11)
        excess = max(excess, np.max((1 - e.fidelity) - bd.zeno_bound(f)[0]))
    ok = err <= 1e-8 and bound_err <= 1e-8 and excess <= 1e-10
    report(3, ok, f"delta'=0: |1-|U_nn| - (1-cos)| = {err:.2e}, bound itself {bound_err:.2e}; "
                  f"generic delta' max excess {excess:.2e}")


def test_criterion_4_jrs_horizon(report):
    scn, model, curve, _ = scenario_frame("schwinger-adiabatic")
    grid = curve.grid
    integral = bd.jrs_bound(model, curve, 1, part="integral")
    boundary = bd.jrs_bound(model, curve, 1, part="boundary")
    rate = np.polyfit(grid, integral, 1)[0]
    # the integrand is constant here, so the growth rate also follows from
    # a single quadrature of the closed-form derivative norms
    p = model.params["schwinger"]
    hd = 0.5 * p.omega0 * p.omega * np.sin(p.theta)
    hdd = hd * p.omega
    gap = p.omega0
    rate_quad = quad(lambda t: 7 * hd ** 2 / gap ** 3 + hdd / gap ** 2, 0, 1)[0]
    crossing = (1 - boundary[-1]) / rate
    infid = 1 - pr.propagate(model, curve, 1).fidelity
    ok = crossing < 100 / OMEGA0 and infid.max() <= 1.5e-6
    report(4, ok, f"growth rate {rate:.4e}/s (closed form {rate_quad:.4e}/s), bound reaches 1 "
                  f"at t = {crossing:.1f} s vs required < {100 / OMEGA0:g} s; "
                  f"max infidelity {infid.max():.2e}")


def _tuned(alpha, p1):
    # Omega chosen so that the single-passage probability equals p1
    return hm.CyclingLZParams(alpha, 1.0, float(np.sqrt(-2 * alpha * np.log(p1) / np.pi)))


def test_criterion_5_stueckelberg(report):
    """The passage phase is only approximately alpha / varpi, so it is tuned
    by a coarse scan of alpha at fixed p1: the constructive case takes the
    scan point with Theta nearest pi/2 (mod pi), the destructive case the
    one nearest 0.  With p1 fixed, Theta cannot come closer to pi/2 than
    about sqrt(p1), which is what limits the M^2 growth at M = 8."""
    start = time.perf_counter()
    p1 = 0.0056
    scan = [(a, pr.stueckelberg_phase(_tuned(a, p1), tol=1e-9))
            for a in np.arange(100.0, 103.2, 0.2)]
    a_con = min(scan, key=lambda s: abs(np.cos(s[1])))[0]
    a_des = min(scan, key=lambda s: abs(np.sin(s[1])))[0]
    Ms = [2, 4, 8]
    pred, meas = pr.lz_multipassage(_tuned(a_con, p1), Ms)
    _, meas_d = pr.lz_multipassage(_tuned(a_des, p1), [8])
    elapsed = time.perf_counter() - start
    ratios = np.array([meas[m] / pred.p1 for m in Ms])
    slope = np.polyfit(np.log(Ms), np.log(ratios), 1)[0]
    rel = max(abs(meas[m] - pred.at(m)) / pred.at(m) for m in Ms)
    checks = {"p1 in range": 0.005 <= pred.p1 <= 0.02, "exponent": 1.8 <= slope <= 2.2,
              "formula within 20%": rel <= 0.2, "destructive": meas_d[8] < 4 * pred.p1,
              "runtime": elapsed < 60}
    bad = [k for k, v in checks.items() if not v]
    report(5, not bad,
           f"alpha {a_con:.1f}/{a_des:.1f}, p1 {pred.p1:.4g}, Theta {pred.Theta % np.pi:.4f}, "
           f"exponent {slope:.3f}, max rel. deviation {rel:.3f}, destructive p8/p1 "
           f"{meas_d[8] / pred.p1:.3g}, {elapsed:.1f} s" + (f"; failed: {bad}" if bad else ""))


def _dominance(model, curve, n):
    f = fr.build_frame(curve, n)
    bw = bd.bw_series(f)
    source = "bw"
    if not bw.all_converged:
        bw, source = bd.dense_series(f), "dense"
    kb = bd.key_bound(f, bw)
    evo = pr.propagate(model, curve, n, E_prime_n=bw.E_prime_n)
    return (np.max(evo.phase_mismatch - kb),
            np.max(2 * (1 - evo.fidelity) - evo.phase_mismatch ** 2), source)


def test_criterion_6_bound_dominance(report):
    worst_kb, worst_rel, dense = -np.inf, -np.inf, []
    for name in cli.builtin_scenarios():
        scn, model, curve, _ = scenario_frame(name)
        a, b, src = _dominance(model, curve, scn.tracked_level)
        worst_kb, worst_rel = max(worst_kb, a), max(worst_rel, b)
        if src == "dense":
            dense.append(name)
    for seed in range(100):
        model = hm.random_smooth(4, seed=10_000 + seed)
        curve = sp.eigencurves(model, np.linspace(*model.domain, 201))
        a, b, src = _dominance(model, curve, seed % 4)
        worst_kb, worst_rel = max(worst_kb, a), max(worst_rel, b)
        if src == "dense":
            dense.append(f"random seed {10_000 + seed}")
    ok = worst_kb <= 1e-6 and worst_rel <= 1e-6
    report(6, ok, f"max(mismatch - key bound) {worst_kb:.3e}, max(2(1-F) - mismatch^2) "
                  f"{worst_rel:.3e}; dense eigenvector fallback for {dense or 'none'}")


def _random_frame(rng, N, ratio):
    q = hm.random_hermitian(rng, N - 1) * rng.uniform(0.5, 5.0)
    a = rng.normal(scale=3.0)
    delta = a * np.eye(N - 1) - q
    smin = np.linalg.svd(delta, compute_uv=False)[-1]
    v = rng.normal(size=N - 1) + 1j * rng.normal(size=N - 1)
    col = 0.5 * ratio * smin * v / np.linalg.norm(v)
    hp = np.zeros((N, N), complex)
    hp[0, 0], hp[1:, 1:], hp[1:, 0] = a, q, col
    hp[0, 1:] = col.conj()
    perm = rng.permutation(N)
    n = int(np.flatnonzero(perm == 0)[0])
    return hp[np.ix_(perm, perm)], n


def test_criterion_7_brillouin_wigner(report):
    rng = np.random.default_rng(2024)
    worst_ov, worst_e, fails = 0.0, 0.0, 0
    for _ in range(1000):
        N = int(rng.integers(2, 9))
        hp, n = _random_frame(rng, N, rng.uniform(0.0, 0.3))
        r = bd.brillouin_wigner_matrix(hp, n)
        w, v = np.linalg.eigh(hp)
        k = int(np.argmin(np.abs(w - r.E_prime_n)))
        order = [n] + [m for m in range(N) if m != n]
        overlap = abs(np.vdot(v[order, k], r.n_prime))
        scale = np.linalg.norm(hp, 2)
        worst_ov = max(worst_ov, 1 - overlap)
        worst_e = max(worst_e, abs(w[k] - r.E_prime_n) / scale)
        fails += not r.converged
    ok = worst_ov <= 1e-10 and worst_e <= 1e-10 and fails == 0
    report(7, ok, f"max 1 - overlap {worst_ov:.2e}, max eigenvalue error / ||H'|| {worst_e:.2e}, "
                  f"{fails} unconverged")


def test_criterion_8_bauer_fike(report):
    rng = np.random.default_rng(19)
    worst = -np.inf
    for k in range(1000):
        N = int(rng.integers(2, 9))
        h = hm.random_hermitian(rng, N)
        h[np.diag_indices(N)] *= 10 ** rng.uniform(-1, 2)
        scale = np.linalg.norm(h, 2)
        for E in np.linalg.eigvalsh(h):
            lhs, rhs = bd.bauer_fike_matrix(h, E)
            worst = max(worst, (lhs - rhs) / scale)
    report(8, worst <= 1e-12, f"max (min|E - H'_mm| - ||offdiag||) / ||H'|| = {worst:.2e}")


def test_criterion_9_two_level_reduction(report):
    worst13, worst14 = 0.0, 0.0
    for name in TWO_LEVEL:
        _, model, curve, frame = scenario_frame(name)
        params = model.params["two_level"]
        g = curve.grid
        ratio, _ = fr.two_level_conditions(params, g)
        worst13 = max(worst13, np.max(np.abs(fr.condition13(frame) - ratio)))
        # reference on a 4x finer grid, sampled back
        fine = np.linspace(g[0], g[-1], 4 * (len(g) - 1) + 1)
        ref = cumulative_integral(fr.two_level_conditions(params, fine)[1], fine)[::4]
        worst14 = max(worst14, np.max(np.abs(fr.condition14(frame) - ref)))
    ok = worst13 <= 1e-8 and worst14 <= 1e-8
    report(9, ok, f"max |cond13 - ratio| {worst13:.2e}, max |cond14 - integral| {worst14:.2e} "
                  f"over {len(TWO_LEVEL)} scenarios")


def test_criterion_10_epsilon_scaling(report):
    ratios = {}
    for name in ("interpolating-3level", "schwinger-adiabatic", "random-4level"):
        scn = cli.load_scenario(name)
        base = cli.build_model(scn)
        vals = []
        for eps in (1.0, 0.5):
            m = pr.rescaled_evolution(base, eps)
            g = np.linspace(scn.t_start / eps, scn.t_end / eps, 801)
            c = sp.eigencurves(m, g, scn.gauge)
            vals.append(bd.jrs_bound(m, c, scn.tracked_level, part="integral")[-1])
        ratios[name] = vals[1] / vals[0]
    ok = all(abs(r - 0.5) <= 0.005 for r in ratios.values())
    report(10, ok, ", ".join(f"{k}: {v:.6f}" for k, v in ratios.items()))
