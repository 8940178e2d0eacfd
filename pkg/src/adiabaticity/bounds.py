"""Rigorous bounds on adiabatic evolution and perturbative eigenpairs of H'.

Everything here works in the block convention of :mod:`adiabaticity.frame`:
the tracked level sits at index 0 of ``H'``, ``delta' = H'_nn - H'_QQ`` and
``Omega' = 2 H'_Qn``.  Vectors returned by the eigenpair routines are in
that block order unless stated otherwise.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ._numerics import cumulative_integral, grid_derivative
from .errors import ConvergenceError, DegeneracyError
from .frame import AdiabaticFrame, QUAD_TOL, _fmt
from .spectral import EigenCurve, gaps

MAX_BW_ITERS = 200
BW_RESIDUAL_TOL = 1e-11
BOUND_SLACK = 1e-6
BF_TOL = 1e-12


# --------------------------------------------------------------------------
# fidelity bound from the norms of dH/dt and d2H/dt2


def _jrs_parts(curve: EigenCurve, n: int):
    gap = gaps(curve, n).local_gap
    hd, hdd = curve.hdot_norm, curve.hddot_norm
    edge = hd / gap ** 2
    integrand = 7.0 * hd ** 2 / gap ** 3 + hdd / gap ** 2
    return edge, integrand


def _jrs_integral(curve, n, quad_tol, max_doublings=6):
    """Running integral of ``7||H'||^2/gap^3 + ||H''||/gap^2`` with grid doubling.

    Only the norms and the spectrum are needed, so the refinement evaluates
    the model directly rather than re-tracking eigenvectors.
    """
    t = curve.grid
    _, y = _jrs_parts(curve, n)
    cum = cumulative_integral(y, t)
    model = curve.model
    if quad_tol is None or model is None or len(t) < 5 or len(t) % 2 == 0:
        return cum
    coarse = cumulative_integral(y[::2], t[::2])[-1]
    for d in range(1, max_doublings + 1):
        if abs(cum[-1] - coarse) <= quad_tol * max(1.0, abs(cum[-1])):
            break
        k = 2 ** d
        fine = np.concatenate([np.linspace(a, b, k + 1)[:-1] for a, b in zip(t[:-1], t[1:])]
                              + [t[-1:]])
        e = np.linalg.eigvalsh(model.eval(fine))
        d_e = np.abs(e[:, :, None] - e[:, None, :])
        N = e.shape[1]
        d_e[:, np.arange(N), np.arange(N)] = np.inf
        # nondegenerate levels never cross, so energy order is level order
        gap = d_e[:, n, :].min(axis=1)
        hd = np.linalg.norm(model.eval_derivative(fine, 1), 2, axis=(1, 2))
        hdd = np.linalg.norm(model.eval_derivative(fine, 2), 2, axis=(1, 2))
        c = cumulative_integral(7.0 * hd ** 2 / gap ** 3 + hdd / gap ** 2, fine)
        coarse = cum[-1]
        cum = c[::k]
    return cum


def jrs_bound(model, curve: EigenCurve, n: int, t_end=None, part="total",
              quad_tol=QUAD_TOL):
    """Bound on ``1 - |<n(t)|Psi(t)>|`` from derivative norms and the gap.

    ``||H'(0)||/gap(0)^2 + ||H'(t)||/gap(t)^2
    + int_0^t (7 ||H'||^2/gap^3 + ||H''||/gap^2)`` with ``'`` meaning time
    derivatives here.  ``part`` selects ``"total"``, ``"integral"`` or
    ``"boundary"``.  Returns the series over the grid, or its value at
    ``t_end``.
    """
    if model is not None and curve.model is None:
        curve = replace(curve, model=model)
    edge, _ = _jrs_parts(curve, n)
    boundary = edge[0] + edge
    integral = _jrs_integral(curve, n, quad_tol)
    series = {"total": boundary + integral, "integral": integral, "boundary": boundary}[part]
    return series if t_end is None else float(series[curve.index(t_end)])


# --------------------------------------------------------------------------
# Brillouin-Wigner eigenpair of H'


@dataclass(frozen=True)
class BWResult:
    """Eigenpair of ``H'`` continuing the tracked level.

    Vectors are in block order (tracked level first).  ``E_prime_n`` is the
    eigenvalue and ``Delta_prime = E_prime_n - H'_nn``; ``eig_error`` is the
    distance to the nearest eigenvalue of a dense eigensolve.
    """

    n_bold: np.ndarray
    n_prime: np.ndarray
    E_prime_n: float
    Delta_prime: float
    iterations: int
    converged: bool
    residual: float = 0.0
    eig_error: float = 0.0


def _blocks(hp):
    hnn = hp[0, 0].real
    delta = hnn * np.eye(hp.shape[0] - 1) - hp[1:, 1:]
    omega = 2.0 * hp[1:, 0]
    return hnn, delta, omega


def brillouin_wigner_matrix(hp, n: int = 0, max_iters=MAX_BW_ITERS,
                            tol=BW_RESIDUAL_TOL, raise_on_failure=True) -> BWResult:
    """Self-consistent eigenpair of a Hermitian matrix ``hp`` around level ``n``.

    Solves ``Delta = (Omega^dagger/2)(delta + Delta)^{-1}(Omega/2)`` by
    fixed-point iteration from ``Delta = 0``, halving the step whenever the
    plain update would increase the residual, then forms the lower block
    ``(1 + delta^{-1} Delta)^{-1} delta^{-1} Omega / 2`` of the unnormalised
    eigenvector with unit ``n`` component.

    Raises
    ------
    ConvergenceError
        After ``max_iters`` iterations, or once ``||delta^{-1} Delta|| >= 1``.
    """
    hp = np.asarray(hp, dtype=complex)
    N = hp.shape[0]
    order = np.array([n] + [m for m in range(N) if m != n])
    hb = hp[order][:, order]
    hnn, delta, omega = _blocks(hb)
    half = 0.5 * omega
    scale = max(np.linalg.norm(hb, 2), np.finfo(float).tiny)
    eye = np.eye(N - 1)

    def rhs(x):
        return float(np.real(half.conj() @ np.linalg.solve(delta + x * eye, half)))

    def fail(msg, it, x):
        if raise_on_failure:
            raise ConvergenceError(msg)
        v = np.full(N, np.nan, dtype=complex)
        return BWResult(v, v, np.nan, x, it, False, np.inf, np.inf)

    x, it = 0.0, 0
    step_tol = tol * scale
    coupled = np.linalg.norm(omega) > 0
    smin = np.linalg.svd(delta, compute_uv=False)[-1]
    if coupled and smin <= np.finfo(float).eps * scale:
        return fail("detuning block not invertible", 0, x)
    inv_norm = 1.0 / max(smin, np.finfo(float).tiny)
    if coupled:
        res = abs(rhs(x) - x)
        while res > step_tol:
            if it >= max_iters:
                return fail(f"no convergence after {max_iters} iterations", it, x)
            new = rhs(x)
            new_res = abs(rhs(new) - new)
            if new_res > res:
                new = x + 0.5 * (new - x)
                new_res = abs(rhs(new) - new)
            x, res = new, new_res
            it += 1
            if abs(x) * inv_norm >= 1.0:
                return fail("||delta'^-1 Delta'|| reached 1", it, x)
    lower = np.linalg.solve(delta + x * eye, half) if coupled else np.zeros(N - 1, complex)
    bold = np.concatenate([[1.0 + 0j], lower])
    prime = bold / np.linalg.norm(bold)
    E = hnn + x
    residual = float(np.linalg.norm(hb @ prime - E * prime))
    w = np.linalg.eigvalsh(hb)
    eig_error = float(np.min(np.abs(w - E)))
    ok = residual <= tol * scale and eig_error <= tol * scale
    return BWResult(n_bold=bold, n_prime=prime, E_prime_n=float(E), Delta_prime=float(x),
                    iterations=it, converged=bool(ok), residual=residual, eig_error=eig_error)


def brillouin_wigner(frame: AdiabaticFrame, t, **kw) -> BWResult:
    """Eigenpair of ``H'(t)`` continuing the tracked level (block order)."""
    k = frame.curve.index(t)
    return brillouin_wigner_matrix(frame.Hprime[k], frame.tracked_level, **kw)


@dataclass(frozen=True)
class BWSeries:
    """Per-sample Brillouin-Wigner results; vectors in block order."""

    grid: np.ndarray
    n_prime: np.ndarray
    E_prime_n: np.ndarray
    Delta_prime: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))


def bw_series(frame: AdiabaticFrame, **kw) -> BWSeries:
    """Brillouin-Wigner eigenpair at every sample; failures are recorded, not raised."""
    K, N = len(frame.grid), frame.dimension
    vecs = np.full((K, N), np.nan, dtype=complex)
    E = np.full(K, np.nan)
    D = np.full(K, np.nan)
    its = np.zeros(K, dtype=int)
    ok = np.zeros(K, dtype=bool)
    for k in range(K):
        r = brillouin_wigner_matrix(frame.Hprime[k], frame.tracked_level,
                                    raise_on_failure=False, **kw)
        vecs[k], E[k], D[k], its[k], ok[k] = r.n_prime, r.E_prime_n, r.Delta_prime, \
            r.iterations, r.converged
    return BWSeries(frame.grid, vecs, E, D, its, ok)


def dense_series(frame: AdiabaticFrame) -> BWSeries:
    """Eigenvector of ``H'`` continuing the tracked level, from a dense eigensolve.

    Used where the Brillouin-Wigner premise fails; vectors follow the
    ``<n_st|n'> >= 0`` convention and are in block order.
    """
    from .frame import frame_eigenvector_column

    col = frame_eigenvector_column(frame)[:, frame.order]
    hb = frame.blocked()
    E = np.real(np.einsum("ki,kij,kj->k", col.conj(), hb, col))
    K = len(frame.grid)
    return BWSeries(frame.grid, col, E, E - frame.Hprime[:, frame.tracked_level,
                                                          frame.tracked_level].real,
                    np.zeros(K, dtype=int), np.ones(K, dtype=bool))


def perturbative_second_order(frame_or_matrix, t=None, n: Optional[int] = None):
    """Second-order eigenvalue and first-order eigenvector of ``H'``.

    ``E ~ H'_nn + sum_m |H'_mn|^2 / (H'_nn - H'_mm)`` and
    ``|n'> ~ |n_st> + sum_m H'_mn / (H'_nn - H'_mm) |m_st>``, returned in
    the original level order.  Accepts a frame and a grid time, or a single
    matrix and a level.
    """
    if isinstance(frame_or_matrix, AdiabaticFrame):
        hp = frame_or_matrix.Hprime[frame_or_matrix.curve.index(t)]
        n = frame_or_matrix.tracked_level
    else:
        hp = np.asarray(frame_or_matrix, dtype=complex)
        n = 0 if n is None else n
    diag = np.real(np.diag(hp))
    den = diag[n] - diag
    scale = max(np.linalg.norm(hp, 2), np.finfo(float).tiny)
    others = np.arange(len(diag)) != n
    if np.any(np.abs(den[others]) < 1e-12 * scale):
        raise DegeneracyError("diagonal entries of H' collide")
    col = hp[:, n]
    vec = np.zeros(len(diag), dtype=complex)
    vec[others] = col[others] / den[others]
    vec[n] = 1.0
    E = diag[n] + float(np.sum(np.abs(col[others]) ** 2 / den[others]))
    return E, vec


# --------------------------------------------------------------------------
# the key bound and its measured counterpart


def key_bound(frame: AdiabaticFrame, bw: BWSeries, t_end=None, quad_tol=None):
    """``||n'(0) - n_st|| + ||n'(t) - n_st|| + int_0^t ||dn'/dt||``.

    ``dn'/dt`` is a fourth-order grid difference of the phase-fixed
    eigenvectors.  Returns the series, or its value at ``t_end``.

    Raises
    ------
    ConvergenceError
        If any Brillouin-Wigner sample failed; the bound is then not
        evaluable.  Pass :func:`dense_series` to evaluate it anyway.
    """
    if not bw.all_converged:
        k = int(np.flatnonzero(~bw.converged)[0])
        raise ConvergenceError(f"Brillouin-Wigner failed at t={bw.grid[k]}; key bound not evaluable")
    v = bw.n_prime
    st = np.zeros(v.shape[1])
    st[0] = 1.0
    edge = np.linalg.norm(v - st, axis=1)
    speed = np.linalg.norm(grid_derivative(v, bw.grid), axis=1)
    series = edge[0] + edge + cumulative_integral(speed, bw.grid)
    return series if t_end is None else float(series[frame.curve.index(t_end)])


def zeno_bound(frame: AdiabaticFrame, t=None):
    """Short-time bounds on ``1 - |U_nn(t)|``.

    With ``x = int_0^t ||Omega'|| / 2`` (equal to ``||Omega'|| t / 2`` for a
    constant coupling) returns ``(1 - cos x, x^2 / 2)``; the cosine form is
    clamped at its maximum 2 once ``x`` exceeds pi.
    """
    om = np.linalg.norm(frame.Omega_prime, axis=1)
    x = 0.5 * cumulative_integral(om, frame.grid)
    cos_form = 1.0 - np.cos(np.minimum(x, np.pi))
    quad_form = 0.5 * x ** 2
    if t is None:
        return cos_form, quad_form
    k = frame.curve.index(t)
    return float(cos_form[k]), float(quad_form[k])


def zeno_time(omega_norm, target):
    """Time for the cosine bound to reach ``target`` at constant ``||Omega'||``."""
    return 2.0 * np.arccos(1.0 - target) / omega_norm


# --------------------------------------------------------------------------
# Bauer-Fike


def bauer_fike_matrix(hp, E):
    """``(min_m |E - H'_mm|, ||H' - diag(H')||)`` for one matrix."""
    hp = np.asarray(hp, dtype=complex)
    diag = np.diag(hp)
    lhs = float(np.min(np.abs(E - diag)))
    rhs = float(np.linalg.norm(hp - np.diag(diag), 2))
    return lhs, rhs


def bauer_fike(frame: AdiabaticFrame, E_prime_n, t=None):
    """Bauer-Fike sides per sample, or at ``t``."""
    if t is not None:
        k = frame.curve.index(t)
        E = E_prime_n[k] if np.ndim(E_prime_n) else E_prime_n
        return bauer_fike_matrix(frame.Hprime[k], E)
    E = np.broadcast_to(E_prime_n, (len(frame.grid),))
    out = np.array([bauer_fike_matrix(h, e) for h, e in zip(frame.Hprime, E)])
    return out[:, 0], out[:, 1]


# --------------------------------------------------------------------------
# report


@dataclass(frozen=True)
class BoundReport:
    """Bound series on a grid.  ``key_bound`` is None when not evaluable."""

    grid: np.ndarray
    jrs_bound: np.ndarray
    key_bound: Optional[np.ndarray]
    zeno_bound: np.ndarray
    zeno_quadratic: np.ndarray
    bauer_fike_lhs: np.ndarray
    bauer_fike_rhs: np.ndarray
    bw_converged: np.ndarray
    E_prime_n: np.ndarray
    key_bound_dense: np.ndarray

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "jrs_bound", "key_bound", "zeno_bound", "bauer_fike_lhs",
                        "bauer_fike_rhs", "bw_converged"])
            for k, t in enumerate(self.grid):
                kb = "" if self.key_bound is None else _fmt(self.key_bound[k])
                w.writerow([_fmt(t), _fmt(self.jrs_bound[k]), kb, _fmt(self.zeno_bound[k]),
                            _fmt(self.bauer_fike_lhs[k]), _fmt(self.bauer_fike_rhs[k]),
                            int(self.bw_converged[k])])


def bound_report(frame: AdiabaticFrame, quad_tol=QUAD_TOL) -> BoundReport:
    """All bounds for one frame.

    ``E_prime_n`` comes from Brillouin-Wigner where it converged and from a
    dense eigensolve elsewhere; ``key_bound_dense`` always uses the dense
    eigenvector.
    """
    curve = frame.curve
    bw = bw_series(frame)
    dense = dense_series(frame)
    kb = key_bound(frame, bw) if bw.all_converged else None
    E = np.where(bw.converged, bw.E_prime_n, dense.E_prime_n)
    lhs, rhs = bauer_fike(frame, E)
    zc, zq = zeno_bound(frame)
    return BoundReport(
        grid=frame.grid,
        jrs_bound=jrs_bound(curve.model, curve, frame.tracked_level, quad_tol=quad_tol),
        key_bound=kb, zeno_bound=zc, zeno_quadratic=zq,
        bauer_fike_lhs=lhs, bauer_fike_rhs=rhs, bw_converged=bw.converged,
        E_prime_n=E, key_bound_dense=key_bound(frame, dense),
    )
