"""Adiabatic-frame Hamiltonian and the adiabaticity criteria built on it.

In the gauge-fixed basis ``exp(i theta_m)|m>`` the coefficient vector of
the state evolves under

    H'_mk = (E_m + dtheta_m/dt) delta_mk - i <m|dk/dt> exp(i (theta_k - theta_m)).

With the tracked level ``n`` moved to the front, ``H'`` splits into the
scalar ``H'_nn``, the detuning block ``delta' = H'_nn - H'_QQ`` and the
coupling column ``Omega' = 2 H'_Qn``.

Criteria that compare a coupling to a gap come in two normalisations.
``"rabi"`` (the default) measures the coupling as the Rabi frequency
``Omega'``, so that on the Schwinger model the first-order criterion is
``|omega sin(theta)| / omega0``.  ``"literal"`` uses the bare matrix element
``|<m|dH/dt|n>|``, which is half of that on two-level models.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._numerics import cumulative_integral, grid_derivative
from .errors import DegeneracyError, SingularBlockError, UndefinedArgError
from .hamiltonian import TwoLevelParams
from .spectral import (
    ARG_FLOOR,
    DEGENERACY_TOL,
    EigenCurve,
    arg_floor,
    coupling_rate,
    eigencurves,
    gaps,
)

CRITERIA_TOL = 1e-8
FRAME_TOL = 1e-6
FIDELITY_TOL = 1e-8
QUAD_TOL = 1e-8
MONO_NOISE_FLOOR = 1e-9
INVERSION_FLOOR = 1e-12
MONO_ADVISORY = 3
MAX_DOUBLINGS = 6
ROUNDING_FLOOR = 64

_NORM_FACTOR = {"rabi": 2.0, "literal": 1.0}


def _factor(normalization):
    try:
        return _NORM_FACTOR[normalization]
    except KeyError:
        raise ValueError(f"normalization must be 'rabi' or 'literal', not {normalization!r}")


@dataclass(frozen=True)
class AdiabaticFrame:
    """``H'`` on a grid, with the block split around ``tracked_level``.

    Attributes
    ----------
    Hprime : (K, N, N) complex
        Adiabatic-frame Hamiltonian in the original level order.
    order : (N,) int
        Level order of the block convention: ``order[0]`` is the tracked
        level, the rest follow in increasing index.
    delta_prime : (K, N-1, N-1) complex
    Omega_prime : (K, N-1) complex
    """

    grid: np.ndarray
    Hprime: np.ndarray
    tracked_level: int
    delta_prime: np.ndarray
    Omega_prime: np.ndarray
    gauge: object
    curve: EigenCurve = field(repr=False)
    order: np.ndarray = field(repr=False, default=None)

    @property
    def dimension(self) -> int:
        return self.Hprime.shape[-1]

    def blocked(self) -> np.ndarray:
        """``H'`` with the tracked level moved to index 0."""
        o = self.order
        return self.Hprime[:, o][:, :, o]

    def unperturbed(self) -> np.ndarray:
        """``H_0 = diag(H'_nn, H'_nn - delta')`` in block order."""
        K, N = len(self.grid), self.dimension
        h0 = np.zeros((K, N, N), dtype=complex)
        hnn = self.Hprime[:, self.tracked_level, self.tracked_level]
        h0[:, 0, 0] = hnn
        h0[:, 1:, 1:] = hnn[:, None, None] * np.eye(N - 1) - self.delta_prime
        return h0

    def perturbation(self) -> np.ndarray:
        """``V`` with off-diagonal blocks ``Omega'/2`` and ``Omega'^dagger/2``."""
        K, N = len(self.grid), self.dimension
        v = np.zeros((K, N, N), dtype=complex)
        v[:, 1:, 0] = 0.5 * self.Omega_prime
        v[:, 0, 1:] = 0.5 * self.Omega_prime.conj()
        return v

    def is_real(self) -> bool:
        scale = max(np.max(np.abs(self.Hprime)), np.finfo(float).tiny)
        return bool(np.max(np.abs(self.Hprime.imag)) <= FRAME_TOL * scale)


def build_frame(curve: EigenCurve, n: int) -> AdiabaticFrame:
    """Adiabatic-frame Hamiltonian of ``curve`` with level ``n`` tracked."""
    N = curve.dimension
    if not 0 <= n < N:
        raise ValueError(f"level {n} out of range for N={N}")
    gs = gaps(curve, n).global_gap
    if np.any(gs < DEGENERACY_TOL * curve.hamiltonian_norm):
        raise DegeneracyError("degenerate levels on the grid")
    th = curve.phases
    rel = np.exp(1j * (th[:, None, :] - th[:, :, None]))
    hp = -1j * curve.couplings * rel
    idx = np.arange(N)
    hp[:, idx, idx] = curve.energies + curve.phase_rates
    order = np.array([n] + [m for m in range(N) if m != n])
    others = order[1:]
    hnn = hp[:, n, n]
    delta = hnn[:, None, None] * np.eye(N - 1) - hp[:, others][:, :, others]
    omega = 2.0 * hp[:, others, n]
    return AdiabaticFrame(grid=curve.grid, Hprime=hp, tracked_level=n,
                          delta_prime=delta, Omega_prime=omega, gauge=curve.gauge,
                          curve=curve, order=order)


def frame_from_transform(curve: EigenCurve) -> np.ndarray:
    """``P^-1 H P - i P^-1 dP/dt`` with ``dP/dt`` by grid differences.

    Independent of the closed-form matrix elements; used as a cross-check.
    """
    P = curve.vectors
    H = curve.model.eval(curve.grid)
    Pdot = grid_derivative(P, curve.grid)
    Pinv = np.linalg.inv(P)
    return Pinv @ H @ P - 1j * Pinv @ Pdot


# --------------------------------------------------------------------------
# pointwise criteria


def _select(series, curve, t):
    return series if t is None else float(series[curve.index(t)])


def standard_criterion(curve: EigenCurve, n: int, t=None, normalization="rabi"):
    """First-order criterion ``sum_m |<m|dH/dt|n>| / (E_n - E_m)^2``.

    Returns the series over the grid when ``t`` is None.
    """
    f = _factor(normalization)
    e = curve.energies
    hd = curve.hdot_eig
    total = np.zeros(len(curve))
    for m in range(curve.dimension):
        if m == n:
            continue
        gap = e[:, n] - e[:, m]
        if np.any(np.abs(gap) < DEGENERACY_TOL * curve.hamiltonian_norm):
            raise DegeneracyError(f"levels {m} and {n} degenerate")
        total += np.abs(hd[:, m, n]) / gap ** 2
    return _select(f * total, curve, t)


def _arg_rates(curve: EigenCurve, n: int, arg_derivative: str):
    """``d/dt arg <m|dn/dt>`` in the transported basis; NaN where undefined."""
    K, N = curve.energies.shape
    floor = arg_floor(curve, n)
    rates = np.zeros((K, N))
    defined = np.ones((K, N), dtype=bool)
    for m in range(N):
        if m == n:
            continue
        z = curve.couplings[:, m, n]
        ok = (np.abs(z) >= floor) | (z == 0)
        if arg_derivative == "fd":
            a = 0.5 * np.unwrap(2.0 * np.angle(np.where(z == 0, 1.0, z)))
            r = grid_derivative(a, curve.grid)
        elif arg_derivative == "analytic":
            with np.errstate(invalid="ignore"):
                r = coupling_rate(curve, m, n)
        else:
            raise ValueError("arg_derivative must be 'analytic' or 'fd'")
        r = np.where(z == 0, 0.0, r)
        rates[:, m] = np.where(ok, r, np.nan)
        defined[:, m] = ok
    return rates, defined


def generalized_criterion(frame: AdiabaticFrame, t=None, normalization="rabi",
                          arg_derivative="analytic"):
    """Gauge-invariant criterion with phase-corrected denominators.

    ``sum_m |<m|dn/dt>| / |E_n - E_m - i<n|dn/dt> + i<m|dm/dt> - d/dt arg<m|dn/dt>|``.

    The expression is independent of the gauge; it is evaluated in the
    transported basis where ``<m|dm/dt> = 0``.  Samples at which a nonzero
    coupling is too small for its argument to be meaningful are NaN in the
    series; a point query there raises :class:`UndefinedArgError`.
    """
    f = _factor(normalization)
    curve = frame.curve
    n = frame.tracked_level
    rates, defined = _arg_rates(curve, n, arg_derivative)
    e = curve.energies
    total = np.zeros(len(curve))
    for m in range(curve.dimension):
        if m == n:
            continue
        z = np.abs(curve.couplings[:, m, n])
        den = np.abs(e[:, n] - e[:, m] - rates[:, m])
        with np.errstate(divide="ignore", invalid="ignore"):
            total += np.where(z == 0, 0.0, z / den)
    total = np.where(defined.all(axis=1), total, np.nan)
    if t is None:
        return f * total
    k = curve.index(t)
    if not defined[k].all():
        raise UndefinedArgError(f"coupling phase undefined at t={curve.grid[k]}")
    return float(f * total[k])


def _block_norms(frame: AdiabaticFrame, norm: str):
    """``||delta'^-1||`` and ``||Omega'||`` per sample, checking invertibility."""
    d = frame.delta_prime
    sv = np.linalg.svd(d, compute_uv=False)
    scale = np.linalg.norm(frame.Hprime, 2, axis=(1, 2))
    bad = sv[:, -1] <= INVERSION_FLOOR * scale
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise SingularBlockError(f"detuning block singular at t={frame.grid[k]}")
    if norm == "spectral":
        return 1.0 / sv[:, -1], np.linalg.norm(frame.Omega_prime, axis=1)
    if norm == "one":
        inv = np.linalg.inv(d)
        return (np.abs(inv).sum(axis=1).max(axis=1),
                np.abs(frame.Omega_prime).sum(axis=1))
    raise ValueError("norm must be 'spectral' or 'one'")


def condition13(frame: AdiabaticFrame, t=None, norm="spectral"):
    """``||delta'^-1|| ||Omega'||`` per sample (spectral norms by default)."""
    inv_norm, om = _block_norms(frame, norm)
    return _select(inv_norm * om, frame.curve, t)


def _rounding_floor(frame: AdiabaticFrame):
    # H'_mm = E_m + dtheta_m/dt, each bounded by ||H|| + ||H'||
    h = np.abs(np.gradient(frame.grid))
    scale = frame.curve.hamiltonian_norm + np.linalg.norm(frame.Hprime, 2, axis=(1, 2))
    return ROUNDING_FLOOR * np.finfo(float).eps * scale / h


def _denoise(deriv, floor):
    floor = floor.reshape((-1,) + (1,) * (deriv.ndim - 1))
    return np.where(np.abs(deriv) <= floor, 0.0, deriv)


def _condition14_integrand(frame: AdiabaticFrame, norm: str):
    _block_norms(frame, norm)
    t = frame.grid
    floor = _rounding_floor(frame)
    inv = np.linalg.inv(frame.delta_prime)
    d_dot = _denoise(grid_derivative(frame.delta_prime, t), floor)
    inv_dot = -inv @ d_dot @ inv
    om_dot = _denoise(grid_derivative(frame.Omega_prime, t), floor)
    om = frame.Omega_prime
    if norm == "spectral":
        return (np.linalg.norm(om, axis=1) * np.linalg.norm(inv_dot, 2, axis=(1, 2))
                + np.linalg.norm(inv, 2, axis=(1, 2)) * np.linalg.norm(om_dot, axis=1))
    return (np.abs(om).sum(axis=1) * np.abs(inv_dot).sum(axis=1).max(axis=1)
            + np.abs(inv).sum(axis=1).max(axis=1) * np.abs(om_dot).sum(axis=1))


def _refine(frame: AdiabaticFrame, doublings: int) -> AdiabaticFrame:
    curve = frame.curve
    t = curve.grid
    k = 2 ** doublings
    fine = np.concatenate([np.linspace(a, b, k + 1)[:-1] for a, b in zip(t[:-1], t[1:])]
                          + [t[-1:]])
    c = eigencurves(curve.model, fine, curve.gauge)
    return build_frame(c, frame.tracked_level)


def _refined_cumulative(frame, integrand, tol, max_doublings):
    """Cumulative Simpson integral on ``frame.grid``, refined by grid doubling.

    The total is compared with the estimate from every other sample; while
    they differ by more than ``tol * max(1, |total|)`` the whole pipeline is
    re-evaluated on a grid with twice the samples.  The absolute floor keeps
    integrals that vanish identically from refining forever; the criteria
    are compared against 1.  Refinement also stops, keeping the previous
    result, once the change no longer halves from one doubling to the next:
    the quadrature is then limited by rounding noise in the differenced
    blocks (which finer grids amplify) or by kinks of the norms.  Without a
    model the grid is used as given.
    """
    t = frame.grid
    y = integrand(frame)
    cum = cumulative_integral(y, t)
    if tol is None or frame.curve.model is None or len(t) < 5 or len(t) % 2 == 0:
        return cum
    change = abs(cum[-1] - cumulative_integral(y[::2], t[::2])[-1])
    for d in range(1, max_doublings + 1):
        if change <= tol * max(1.0, abs(cum[-1])):
            break
        fine = _refine(frame, d)
        c = cumulative_integral(integrand(fine), fine.grid)[:: 2 ** d]
        new_change = abs(c[-1] - cum[-1])
        if new_change > 0.5 * change:
            break
        cum, change = c, new_change
    return cum


def condition14(frame: AdiabaticFrame, t_end=None, norm="spectral", quad_tol=QUAD_TOL,
                max_doublings=MAX_DOUBLINGS):
    """Running integral of ``||Omega'|| ||d delta'^-1/dt|| + ||delta'^-1|| ||dOmega'/dt||``.

    Block derivatives are fourth-order grid differences and the integral is
    composite Simpson.  Difference quotients no larger than
    ``64 eps (||H|| + ||H'||) / h`` are rounding noise and count as zero, so blocks
    that are constant up to rounding integrate to exactly zero.  With ``quad_tol`` set and a model attached to the
    curve, the grid is doubled until the total settles.  Returns the
    cumulative series, or its value at ``t_end``.
    """
    cum = _refined_cumulative(frame, lambda f: _condition14_integrand(f, norm),
                              quad_tol, max_doublings)
    return _select(cum, frame.curve, t_end)


# --------------------------------------------------------------------------
# two-level closed forms


def _two_level_parts(params: TwoLevelParams, t):
    """Coupling ``z = phi' sin(theta) - i theta'``, its derivative and ``delta'``."""
    (w, wd, _), (th, thd, thdd), (_, phd, phdd) = params.jet(t)
    z = phd * np.sin(th) - 1j * thd
    zd = phdd * np.sin(th) + phd * thd * np.cos(th) - 1j * thdd
    az = np.abs(z)
    scale = np.abs(wd / w) + np.abs(phd) + np.abs(thd)
    ok = (az >= ARG_FLOOR * scale) | (az == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = np.where(az == 0, 0.0, np.imag(zd / np.where(az == 0, 1.0, z)))
    return z, zd, w - phd * np.cos(th) + rate, ok


def two_level_conditions(params: TwoLevelParams, t, step=None):
    """Closed-form two-level conditions at ``t``.

    Returns ``(ratio15, integrand16)`` with
    ``ratio15 = |phi' sin(theta) - i theta'| /
    |phi' cos(theta) - omega0 - d/dt arg(phi' sin(theta) - i theta')|``
    and ``integrand16 = |d/dt (|Omega'| / delta')|``.

    ``d|Omega'|/dt`` is taken analytically so that zeros of the coupling
    (kinks of its modulus) are handled exactly; ``d delta'/dt`` needs one
    more derivative than the parametrisation provides and is a
    fourth-order central difference with step ``step`` (default
    ``1e-3 * params.time_scale``).

    Raises
    ------
    UndefinedArgError
        For scalar ``t`` where the coupling is nonzero but below the
        argument floor.  Array input returns NaN at such samples instead.
    """
    t_arr = np.asarray(t, dtype=float)
    z, zd, delta, ok = _two_level_parts(params, t_arr)
    h = step or 1e-3 * params.time_scale
    d = [_two_level_parts(params, t_arr + s * h)[2] for s in (2, 1, -1, -2)]
    delta_dot = (-d[0] + 8 * d[1] - 8 * d[2] + d[3]) / (12 * h)
    az = np.abs(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        az_dot = np.where(az == 0, np.abs(zd), np.real(np.conj(z) * zd) / az)
    integrand = np.abs(az_dot / delta - az * delta_dot / delta ** 2)
    ratio = np.where(ok, az / np.abs(delta), np.nan)
    if t_arr.ndim == 0:
        if not ok:
            raise UndefinedArgError(f"coupling phase undefined at t={float(t_arr)}")
        return float(ratio), float(integrand)
    return ratio, integrand


# --------------------------------------------------------------------------
# monotonicity


def count_monotonicity_changes(series, noise_floor=MONO_NOISE_FLOOR) -> int:
    """Number of direction changes of a sampled real function.

    A change is counted once the series has moved back from its running
    extremum by more than ``noise_floor`` times its scale, the larger of
    its range and its largest magnitude, so floating-point jitter on a
    constant series does not register.
    """
    y = np.asarray(series, dtype=float)
    y = y[np.isfinite(y)]
    if y.size < 3:
        return 0
    thr = noise_floor * max(np.ptp(y), np.max(np.abs(y)))
    if thr == 0:
        return 0
    direction, count = 0, 0
    lo = hi = ref = y[0]
    for v in y[1:]:
        if direction == 0:
            lo, hi = min(lo, v), max(hi, v)
            if v - lo > thr:
                direction, ref = 1, v
            elif hi - v > thr:
                direction, ref = -1, v
        elif direction > 0:
            if v > ref:
                ref = v
            elif ref - v > thr:
                direction, ref, count = -1, v, count + 1
        else:
            if v < ref:
                ref = v
            elif v - ref > thr:
                direction, ref, count = 1, v, count + 1
    return count


def frame_eigenvector_column(frame: AdiabaticFrame) -> np.ndarray:
    """Eigenvector of ``H'`` continuing ``|n_st>``, phase ``<n_st|n'> >= 0``.

    Followed along the grid by maximal overlap, starting from the
    eigenvector with largest weight on the tracked level.  Shape (K, N),
    original level order.
    """
    n = frame.tracked_level
    w, v = np.linalg.eigh(frame.Hprime)
    K, N = w.shape
    out = np.empty((K, N), dtype=complex)
    prev = None
    for k in range(K):
        if prev is None:
            j = int(np.argmax(np.abs(v[k, n, :])))
        else:
            j = int(np.argmax(np.abs(prev.conj() @ v[k])))
        x = v[k, :, j]
        a = x[n]
        x = x * (np.conj(a) / abs(a) if abs(a) > 0 else 1.0)
        out[k] = x
        prev = x
    return out


def monotonicity_counts(frame: AdiabaticFrame, noise_floor=MONO_NOISE_FLOOR) -> dict:
    """Monotonicity changes of each entry ``P'_mn`` of the tracked column.

    Entries are real when ``H'`` is real; otherwise their moduli are used.
    """
    col = frame_eigenvector_column(frame)
    real = frame.is_real()
    counts = {}
    for m in range(frame.dimension):
        s = col[:, m].real if real else np.abs(col[:, m])
        counts[m] = count_monotonicity_changes(s, noise_floor)
    return counts


# --------------------------------------------------------------------------
# series bundle


@dataclass(frozen=True)
class CriteriaSeries:
    """All criterion series for one frame.

    ``two_level_ratio`` is ``|Omega'|/|delta'|`` (N = 2 only, else None);
    ``monotonicity_changes`` maps each level ``m`` to the count for
    ``P'_mn``.  NaN entries mark samples where a coupling phase is
    undefined.
    """

    grid: np.ndarray
    standard: np.ndarray
    generalized: np.ndarray
    cond13: np.ndarray
    cond14_integrand: np.ndarray
    cond14_integral: np.ndarray
    two_level_ratio: Optional[np.ndarray]
    monotonicity_changes: dict
    gauge: str
    normalization: str = "rabi"

    @property
    def oscillation_flag(self) -> bool:
        """Advisory: some tracked-column entry changes direction often."""
        return max(self.monotonicity_changes.values(), default=0) > MONO_ADVISORY

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "standard", "generalized", "cond13", "cond14_integral", "ratio15"])
            for k, t in enumerate(self.grid):
                row = [t, self.standard[k], self.generalized[k], self.cond13[k],
                       self.cond14_integral[k]]
                cells = [_fmt(x) for x in row]
                cells.append("" if self.two_level_ratio is None else _fmt(self.two_level_ratio[k]))
                w.writerow(cells)


def _fmt(x) -> str:
    x = float(x)
    return "" if np.isnan(x) else format(x, ".17g")


def criteria_series(frame: AdiabaticFrame, normalization="rabi", norm="spectral",
                    arg_derivative="analytic", quad_tol=QUAD_TOL) -> CriteriaSeries:
    curve = frame.curve
    n = frame.tracked_level
    cond13 = condition13(frame, norm=norm)
    integrand = _condition14_integrand(frame, norm)
    integral = condition14(frame, norm=norm, quad_tol=quad_tol)
    ratio = None
    if frame.dimension == 2:
        ratio = np.abs(frame.Omega_prime[:, 0]) / np.abs(frame.delta_prime[:, 0, 0])
    return CriteriaSeries(
        grid=frame.grid,
        standard=standard_criterion(curve, n, normalization=normalization),
        generalized=generalized_criterion(frame, normalization=normalization,
                                          arg_derivative=arg_derivative),
        cond13=cond13,
        cond14_integrand=integrand,
        cond14_integral=integral,
        two_level_ratio=ratio,
        monotonicity_changes=monotonicity_counts(frame),
        gauge=str(frame.gauge),
        normalization=normalization,
    )
