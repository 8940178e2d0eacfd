"""Instantaneous eigendecomposition along a time grid.

Levels are ordered by energy at the first sample and followed across the
grid by maximal overlap.  Eigenvectors are first parallel transported
(``<m|dm/dt> = 0``); the requested gauge is then applied as explicit phases
``theta_m(t)`` so that the stored vectors are ``exp(i theta_m) |m>``.

Vector derivatives are exact up to the accuracy of ``dH/dt``: for the
parallel-transported basis ``d|n>/dt = sum_m |m> <m|dH/dt|n> / (E_n - E_m)``.
"""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._numerics import cumulative_integral, grid_derivative, unwrap_mod_pi
from .errors import ContinuityError, DegeneracyError, UndefinedArgError
from .hamiltonian import HamiltonianModel

DEGENERACY_TOL = 1e-10
CONTINUITY_FLOOR = 0.9
MAX_REFINEMENTS = 12
ARG_FLOOR = 1e-12

GAUGE_TAGS = ("parallel_transport", "berry_dynamical", "pancharatnam_aligned")


@dataclass(frozen=True)
class GaugeChoice:
    """Phase convention for the adiabatic basis.

    ``pancharatnam_aligned`` needs the tracked level: it sets
    ``theta_m = theta_n + arg(-i <m|dn/dt>)`` for ``m != n`` and fixes the
    remaining freedom by ``sum_m theta_m = 0``.
    """

    tag: str = "parallel_transport"
    level: Optional[int] = None

    def __post_init__(self):
        if self.tag not in GAUGE_TAGS:
            raise ValueError(f"unknown gauge {self.tag!r}")
        if self.tag == "pancharatnam_aligned" and self.level is None:
            raise ValueError("pancharatnam_aligned gauge needs a level")

    @classmethod
    def parse(cls, text: str) -> "GaugeChoice":
        m = re.fullmatch(r"\s*(\w+)\s*(?:\(\s*(\d+)\s*\))?\s*", text)
        if not m:
            raise ValueError(f"cannot parse gauge {text!r}")
        level = int(m.group(2)) if m.group(2) is not None else None
        return cls(m.group(1), level)

    def __str__(self):
        return self.tag if self.level is None else f"{self.tag}({self.level})"


PARALLEL_TRANSPORT = GaugeChoice("parallel_transport")
BERRY_DYNAMICAL = GaugeChoice("berry_dynamical")


def pancharatnam(n: int) -> GaugeChoice:
    return GaugeChoice("pancharatnam_aligned", n)


@dataclass(frozen=True)
class GapSeries:
    local_gap: np.ndarray
    global_gap: np.ndarray


@dataclass(frozen=True)
class EigenCurve:
    """Gauge-fixed eigen-data on a grid; level ``m`` is column ``m``.

    Attributes
    ----------
    energies : (K, N)
    vectors : (K, N, N)
        Gauge-fixed eigenvectors ``exp(i theta_m) |m>``.
    vector_derivatives : (K, N, N)
        Exact time derivatives of ``vectors``.
    base_vectors : (K, N, N)
        Parallel-transported eigenvectors before the gauge phases.
    couplings : (K, N, N)
        ``<m|dk/dt>`` in the parallel-transported basis (zero diagonal).
    hdot_eig, hddot_eig : (K, N, N)
        ``dH/dt`` and ``d2H/dt2`` in the parallel-transported basis.
    phases, phase_rates : (K, N)
        ``theta_m`` and ``d theta_m / dt``.
    hamiltonian_norm, hdot_norm, hddot_norm : (K,)
        Spectral norms of ``H``, ``dH/dt`` and ``d2H/dt2``.
    """

    grid: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray
    vector_derivatives: np.ndarray
    gauge: GaugeChoice
    base_vectors: np.ndarray
    couplings: np.ndarray
    hdot_eig: np.ndarray
    hddot_eig: np.ndarray
    phases: np.ndarray
    phase_rates: np.ndarray
    hamiltonian_norm: np.ndarray
    hdot_norm: np.ndarray
    hddot_norm: np.ndarray
    model: Optional[HamiltonianModel] = None
    refinements: int = 0

    @property
    def dimension(self) -> int:
        return self.energies.shape[1]

    def __len__(self):
        return len(self.grid)

    def index(self, t) -> int:
        """Grid index of time ``t`` (must be a grid sample)."""
        k = int(np.argmin(np.abs(self.grid - t)))
        scale = max(1.0, abs(self.grid[-1] - self.grid[0]))
        if abs(self.grid[k] - t) > 1e-9 * scale:
            raise ValueError(f"t={t} is not a grid sample")
        return k

    def with_gauge(self, gauge: GaugeChoice, **kw) -> "EigenCurve":
        """Same curve, other phase convention (no re-diagonalisation)."""
        theta, theta_dot = _gauge_phases(self, gauge, **kw)
        return _apply_phases(self, gauge, theta, theta_dot)

    def to_csv(self, path, n: int = 0):
        gs = gaps(self, n)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"E{m}" for m in range(self.dimension)]
                       + ["local_gap", "global_gap"])
            for k, t in enumerate(self.grid):
                row = [t, *self.energies[k], gs.local_gap[k], gs.global_gap[k]]
                w.writerow([format(float(x), ".17g") for x in row])


# --------------------------------------------------------------------------


def _eigh(h, real):
    if real:
        return np.linalg.eigh(h.real)
    return np.linalg.eigh(h)


def _hermitian_norm(a):
    """Spectral norm of a stack of Hermitian matrices."""
    return np.max(np.abs(np.linalg.eigvalsh(a)), axis=-1)


def _normalize_phase(vecs, real):
    """Deterministic phase at the first sample."""
    vecs = np.array(vecs, dtype=complex)
    for m in range(vecs.shape[1]):
        v = vecs[:, m]
        if real:
            nz = np.flatnonzero(np.abs(v) > 1e-14)
            s = np.sign(v[nz[0]].real) if nz.size else 1.0
            vecs[:, m] = s * v.real
        else:
            j = int(np.argmax(np.abs(v)))
            vecs[:, m] = v * np.exp(-1j * np.angle(v[j]))
    return vecs


def _check_gaps(energies, hnorm, t):
    e = np.sort(energies)
    gap = np.min(np.diff(e))
    if gap < DEGENERACY_TOL * max(hnorm, np.finfo(float).tiny):
        raise DegeneracyError(f"levels degenerate at t={t} (gap {gap:.3e})")


def _coupling(e, vecs, hdot):
    """Rotate dH/dt into the eigenbasis and form <m|dk/dt>."""
    hd = vecs.conj().T @ hdot @ vecs
    de = e[None, :] - e[:, None]
    np.fill_diagonal(de, 1.0)
    c = hd / de
    np.fill_diagonal(c, 0.0)
    return hd, c


def _transport(u_a, g_a, u_b, g_b, h, real):
    """Phases for ``u_b`` continuing the parallel transport from ``u_a``.

    For an exactly transported curve ``arg<u(t)|u(t+h)> = -(h^2/6)
    Im<u'(t)|u'(t+h)> + O(h^5)``; the correction term removes the leading
    error of naive overlap alignment.
    """
    s = np.einsum("im,im->m", u_a.conj(), u_b)
    if real:
        return np.where(s.real < 0, -1.0, 1.0)
    q = np.einsum("im,im->m", g_a.conj(), g_b)
    delta = -np.angle(s)
    for _ in range(4):
        delta = -np.angle(s) - (h * h / 6.0) * np.imag(np.exp(1j * delta) * q)
    return np.exp(1j * delta)


class _Tracker:
    def __init__(self, model: HamiltonianModel):
        self.model = model
        self.real = model.is_real
        self.refinements = 0

    def sample(self, t, h=None, hdot=None):
        if h is None:
            h = self.model.eval(t)
            hdot = self.model.eval_derivative(t, 1)
        e, v = _eigh(h, self.real)
        hnorm = np.max(np.abs(e))
        _check_gaps(e, hnorm, t)
        return e, np.asarray(v, dtype=complex), hdot

    def advance(self, t_a, state_a, t_b, raw_b, depth=0):
        """Match and phase-align the sample at ``t_b`` to the one at ``t_a``."""
        e_a, u_a, g_a = state_a
        e_b, v_b, hdot_b = raw_b
        ov = np.abs(u_a.conj().T @ v_b)
        rows, cols = linear_sum_assignment(-ov)
        if ov[rows, cols].min() < CONTINUITY_FLOOR:
            if depth >= MAX_REFINEMENTS:
                raise ContinuityError(
                    f"eigenvector overlap below {CONTINUITY_FLOOR} between t={t_a} and t={t_b} "
                    f"after {MAX_REFINEMENTS} refinements")
            self.refinements += 1
            t_mid = 0.5 * (t_a + t_b)
            mid = self.advance(t_a, state_a, t_mid, self.sample(t_mid), depth + 1)
            return self.advance(t_mid, mid, t_b, raw_b, depth + 1)
        perm = cols[np.argsort(rows)]
        e_b = e_b[perm]
        v_b = v_b[:, perm]
        _, c_b = _coupling(e_b, v_b, hdot_b)
        g_b = v_b @ c_b
        ph = _transport(u_a, g_a, v_b, g_b, t_b - t_a, self.real)
        return e_b, v_b * ph, g_b * ph


def _track_in_order(grid, e_all, v_all, Hd, real):
    """Vectorised tracking when energy order already matches every step.

    If each eigenvector overlaps its successor in energy order by at least
    the continuity floor, that is the only admissible matching.  The
    transport phase increment of a step does not depend on the phase
    already accumulated, so the phases follow from a cumulative product.
    Returns None when some step needs the general matcher.
    """
    s0 = np.einsum("kim,kim->km", v_all[:-1].conj(), v_all[1:])
    if np.abs(s0).min() < CONTINUITY_FLOOR:
        return None
    if real:
        r = np.where(s0.real < 0, -1.0, 1.0)
    else:
        hd = np.einsum("kim,kij,kjn->kmn", v_all.conj(), Hd, v_all)
        de = e_all[:, None, :] - e_all[:, :, None]
        N = e_all.shape[1]
        de[:, np.arange(N), np.arange(N)] = 1.0
        c = hd / de
        c[:, np.arange(N), np.arange(N)] = 0.0
        g = v_all @ c
        q0 = np.einsum("kim,kim->km", g[:-1].conj(), g[1:])
        h2 = (np.diff(grid) ** 2 / 6.0)[:, None]
        delta = -np.angle(s0)
        for _ in range(4):
            delta = -np.angle(s0) - h2 * np.imag(np.exp(1j * delta) * q0)
        r = np.exp(1j * delta)
    ph = np.concatenate([np.ones((1, r.shape[1]), dtype=complex), np.cumprod(r, axis=0)])
    return v_all * ph[:, None, :]


def eigencurves(model: HamiltonianModel, grid, gauge: GaugeChoice = PARALLEL_TRANSPORT,
                arg_derivative: str = "analytic") -> EigenCurve:
    """Continuity-tracked, gauge-fixed eigendecomposition of ``model`` on ``grid``.

    Parameters
    ----------
    arg_derivative : {"analytic", "fd"}
        How ``d/dt arg<m|dn/dt>`` is obtained for the Pancharatnam gauge:
        from ``d2H/dt2`` or by differencing the unwrapped argument.

    Raises
    ------
    DegeneracyError
        A gap falls below ``1e-10 * ||H||`` at a grid sample.
    ContinuityError
        Overlap matching fails after 12 bisections of a grid step.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing with at least two samples")
    H = model.eval(grid)
    Hd = model.eval_derivative(grid, 1)
    Hdd = model.eval_derivative(grid, 2)
    real = model.is_real
    e_all, v_all = _eigh(H, real)
    v_all = np.asarray(v_all, dtype=complex)
    hnorm = np.max(np.abs(e_all), axis=1)
    for k, t in enumerate(grid):
        _check_gaps(e_all[k], hnorm[k], t)

    tracker = _Tracker(model)
    K, N = e_all.shape
    v_all[0] = _normalize_phase(v_all[0], real)
    fast = _track_in_order(grid, e_all, v_all, Hd, real)
    if fast is not None:
        energies, base = e_all, fast
    else:
        energies = np.empty((K, N))
        base = np.empty((K, N, N), dtype=complex)
        _, c0 = _coupling(e_all[0], v_all[0], Hd[0])
        state = (e_all[0], v_all[0], v_all[0] @ c0)
        energies[0], base[0] = state[0], state[1]
        for k in range(1, K):
            state = tracker.advance(grid[k - 1], state, grid[k], (e_all[k], v_all[k], Hd[k]))
            energies[k], base[k] = state[0], state[1]

    hd_eig = np.empty_like(base)
    couplings = np.empty_like(base)
    for k in range(K):
        hd_eig[k], couplings[k] = _coupling(energies[k], base[k], Hd[k])
    hdd_eig = np.einsum("kim,kij,kjn->kmn", base.conj(), Hdd, base)

    raw = EigenCurve(
        grid=grid, energies=energies, vectors=base,
        vector_derivatives=base @ couplings, gauge=PARALLEL_TRANSPORT,
        base_vectors=base, couplings=couplings, hdot_eig=hd_eig, hddot_eig=hdd_eig,
        phases=np.zeros((K, N)), phase_rates=np.zeros((K, N)),
        hamiltonian_norm=np.max(np.abs(e_all), axis=1),
        hdot_norm=_hermitian_norm(Hd),
        hddot_norm=_hermitian_norm(Hdd),
        model=model, refinements=tracker.refinements,
    )
    if gauge == PARALLEL_TRANSPORT:
        return raw
    return raw.with_gauge(gauge, arg_derivative=arg_derivative)


def coupling_rate(curve: EigenCurve, m: int, n: int) -> np.ndarray:
    """``d/dt arg <m|dn/dt>`` in the parallel-transported basis, per sample."""
    hd, c, e = curve.hdot_eig, curve.couplings, curve.energies
    d = curve.hddot_eig + hd @ c - c @ hd
    gap = e[:, n] - e[:, m]
    de = np.real(hd[:, n, n] - hd[:, m, m])
    c_dot = d[:, m, n] / gap - hd[:, m, n] * de / gap ** 2
    z = c[:, m, n]
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.imag(c_dot / z)


def arg_floor(curve: EigenCurve, n: int) -> np.ndarray:
    """Couplings below this magnitude have no meaningful argument."""
    return ARG_FLOOR * curve.hdot_norm / np.maximum(gaps(curve, n).local_gap, np.finfo(float).tiny)


def _fill_missing(t, y, ok):
    if ok.all():
        return y
    if not ok.any():
        return np.zeros_like(y)
    return np.interp(t, t[ok], y[ok])


def _gauge_phases(curve: EigenCurve, gauge: GaugeChoice, arg_derivative="analytic"):
    """Phases relative to the parallel-transported base."""
    K, N = curve.energies.shape
    if gauge.tag == "parallel_transport":
        return np.zeros((K, N)), np.zeros((K, N))
    if gauge.tag == "berry_dynamical":
        # <m|dm/dt> = 0 in the base, so only the dynamical phase remains
        theta = -cumulative_integral(curve.energies, curve.grid)
        return theta, -curve.energies.copy()
    n = gauge.level
    if not 0 <= n < N:
        raise ValueError(f"level {n} out of range for N={N}")
    t = curve.grid
    real = curve.model is not None and curve.model.is_real
    floor = arg_floor(curve, n)
    rel = np.zeros((K, N))
    rel_dot = np.zeros((K, N))
    for m in range(N):
        if m == n:
            continue
        z = curve.couplings[:, m, n]
        if real:
            # real eigenvectors: the Pancharatnam phase arg<m|dn/dt> is zero
            rel[:, m] = -0.5 * np.pi
            continue
        ok = np.abs(z) >= floor
        a = np.full(K, np.nan)
        a[ok] = unwrap_mod_pi(np.angle(-1j * z[ok]))
        rel[:, m] = _fill_missing(t, a, ok)
        if arg_derivative == "fd":
            rel_dot[:, m] = grid_derivative(rel[:, m], t)
        else:
            rate = coupling_rate(curve, m, n)
            rel_dot[:, m] = _fill_missing(t, rate, ok & np.isfinite(rate))
    theta_n = -rel.sum(axis=1) / N
    theta_n_dot = -rel_dot.sum(axis=1) / N
    theta = rel + theta_n[:, None]
    theta_dot = rel_dot + theta_n_dot[:, None]
    theta[:, n] = theta_n
    theta_dot[:, n] = theta_n_dot
    return theta, theta_dot


def _apply_phases(curve: EigenCurve, gauge, theta, theta_dot) -> EigenCurve:
    ph = np.exp(1j * theta)[:, None, :]
    u = curve.base_vectors
    g = u @ curve.couplings
    new = EigenCurve(
        grid=curve.grid, energies=curve.energies, vectors=u * ph,
        vector_derivatives=(g + 1j * theta_dot[:, None, :] * u) * ph,
        gauge=gauge, base_vectors=u, couplings=curve.couplings,
        hdot_eig=curve.hdot_eig, hddot_eig=curve.hddot_eig, phases=theta, phase_rates=theta_dot,
        hamiltonian_norm=curve.hamiltonian_norm, hdot_norm=curve.hdot_norm,
        hddot_norm=curve.hddot_norm, model=curve.model, refinements=curve.refinements,
    )
    return new


def coupling_matrix_element(curve: EigenCurve, m: int, n: int, t=None):
    """``<m|dn/dt> = <m|dH/dt|n> / (E_n - E_m)`` in the curve's gauge.

    Returns the full series when ``t`` is None.
    """
    if m == n:
        raise ValueError("m and n must differ")
    gap = np.abs(curve.energies[:, n] - curve.energies[:, m])
    if np.any(gap < DEGENERACY_TOL * curve.hamiltonian_norm):
        raise DegeneracyError(f"levels {m} and {n} degenerate")
    z = curve.couplings[:, m, n] * np.exp(1j * (curve.phases[:, n] - curve.phases[:, m]))
    return z if t is None else complex(z[curve.index(t)])


def fd_vector_derivatives(curve: EigenCurve) -> np.ndarray:
    """Grid differences of the gauge-fixed vectors (independent cross-check)."""
    return grid_derivative(curve.vectors, curve.grid)


def gaps(curve: EigenCurve, n: int) -> GapSeries:
    e = curve.energies
    d = np.abs(e[:, :, None] - e[:, None, :])
    N = e.shape[1]
    d[:, np.arange(N), np.arange(N)] = np.inf
    return GapSeries(local_gap=d[:, n, :].min(axis=1), global_gap=d.min(axis=(1, 2)))


def require_defined_arg(curve: EigenCurve, m: int, n: int, k: int):
    if abs(curve.couplings[k, m, n]) < arg_floor(curve, n)[k]:
        raise UndefinedArgError(
            f"|<{m}|d{n}/dt>| below arg floor at t={curve.grid[k]}")
