"""Exact time evolution and closed-form two-level oracles.

The integrator is the fourth-order commutator-free exponential scheme with
two exponentials per step, evaluated at the Gauss-Legendre nodes.  Each
exponential is of a Hermitian matrix and is formed from its
eigendecomposition, so every step is unitary to rounding error.  Step
sizes adapt by step doubling: a full step is compared with two half
steps and the half-step result is kept.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from ._numerics import cumulative_integral
from .errors import StepUnderflowError
from .frame import _fmt, build_frame
from .hamiltonian import (
    CyclingLZParams,
    HamiltonianModel,
    InterpolatingParams,
    SchwingerParams,
    cycling_lz,
)
from .spectral import EigenCurve

UNITARITY_TOL = 1e-10
MIN_STEP_FRACTION = 1e-12
DEFAULT_TOL = 1e-10
_ROUNDOFF = 10 * np.finfo(float).eps

_R3 = np.sqrt(3.0)
_NODES = np.array([0.5 - _R3 / 6, 0.5 + _R3 / 6])
_A1 = 0.25 + _R3 / 6
_A2 = 0.25 - _R3 / 6


def _expm_hermitian(k):
    """``exp(-i K)`` for a stack of Hermitian matrices ``K``."""
    if k.shape[-1] == 2:
        return _expm_hermitian_2x2(k)
    w, v = np.linalg.eigh(k)
    return (v * np.exp(-1j * w)[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)


def _expm_hermitian_2x2(k):
    """``exp(-i (a + b.sigma)) = exp(-i a) (cos|b| - i sin|b| b.sigma / |b|)``."""
    a = 0.5 * (k[..., 0, 0].real + k[..., 1, 1].real)
    bz = 0.5 * (k[..., 0, 0].real - k[..., 1, 1].real)
    bxy = k[..., 1, 0]
    r = np.sqrt(bz * bz + np.abs(bxy) ** 2)
    c = np.cos(r)
    sinc = np.sinc(r / np.pi)
    ph = np.exp(-1j * a)
    out = np.empty(k.shape, dtype=complex)
    out[..., 0, 0] = ph * (c - 1j * sinc * bz)
    out[..., 1, 1] = ph * (c + 1j * sinc * bz)
    out[..., 1, 0] = -1j * ph * sinc * bxy
    out[..., 0, 1] = -1j * ph * sinc * np.conj(bxy)
    return out


def _cf4_steps(model, starts, hs):
    """One CF4 step from each ``starts[i]`` with size ``hs[i]``.

    Calls the evaluator directly: the caller has already checked that the
    whole integration interval lies in the model domain.
    """
    starts = np.asarray(starts, dtype=float)
    hs = np.asarray(hs, dtype=float)
    times = starts[:, None] + hs[:, None] * _NODES[None, :]
    H = np.asarray(model.evaluator(times.ravel()), dtype=complex)
    H = H.reshape(times.shape + (model.dimension,) * 2)
    h = hs[:, None, None]
    first = _expm_hermitian(h * (_A1 * H[:, 0] + _A2 * H[:, 1]))
    second = _expm_hermitian(h * (_A2 * H[:, 0] + _A1 * H[:, 1]))
    return second @ first


def evolve(model: HamiltonianModel, grid, tol=DEFAULT_TOL, h0=None):
    """Propagator ``U(t_k, t_0)`` on every grid sample.

    The local error of each step, estimated by step doubling, is kept below
    ``tol * h / (t_K - t_0)`` (but not below a few rounding units) so that
    the accumulated error stays near ``tol``.

    Raises
    ------
    StepUnderflowError
        When the controller asks for a step below ``1e-12 * (t_K - t_0)``.
    """
    grid = np.asarray(grid, dtype=float)
    model.eval(grid)
    span = grid[-1] - grid[0]
    N = model.dimension
    out = np.empty((len(grid), N, N), dtype=complex)
    U = np.eye(N, dtype=complex)
    out[0] = U
    min_step = MIN_STEP_FRACTION * span
    h = h0 or span / 64
    t = grid[0]
    for k in range(1, len(grid)):
        target = grid[k]
        while t < target:
            last = target - t <= h * (1 + 1e-12)
            step = target - t if last else h
            if step < min_step:
                raise StepUnderflowError(f"step {step:.3e} below minimum at t={t}")
            half = 0.5 * step
            big, a, b = _cf4_steps(model, [t, t, t + half], [step, half, half])
            small = b @ a
            err = np.max(np.abs(small - big)) / 15.0
            allowed = max(tol * step / span, _ROUNDOFF)
            if err <= allowed:
                U = small @ U
                t = target if last else t + step
                grow = 0.9 * (allowed / err) ** 0.2 if err > 0 else 2.0
                if not last:
                    h = step * min(2.0, max(1.0, grow))
            else:
                h = step * max(0.2, 0.9 * (allowed / err) ** 0.2)
                if h < min_step:
                    raise StepUnderflowError(f"step {h:.3e} below minimum at t={t}")
        # project out accumulated rounding drift (nearest unitary)
        w, _, vh = np.linalg.svd(U)
        U = w @ vh
        out[k] = U
    return out


def unitarity_error(U) -> np.ndarray:
    N = U.shape[-1]
    return np.max(np.abs(np.swapaxes(U.conj(), -1, -2) @ U - np.eye(N)), axis=(-2, -1))


# --------------------------------------------------------------------------
# evolution against a tracked eigencurve


@dataclass(frozen=True)
class EvolutionResult:
    """Evolution from ``|n(0)>`` compared with the tracked level.

    ``fidelity`` is ``|<n(t)|Psi(t)>|``; ``phase_mismatch`` is
    ``||Psi - exp(-i int E'_n)|n(t)>||`` with ``E'_n`` the eigenvalue of
    ``H'`` continuing the level; ``usual_mismatch`` replaces ``E'_n`` by
    ``H'_nn = E_n - i<n|dn/dt>``.
    """

    grid: np.ndarray
    U: np.ndarray
    psi: np.ndarray
    fidelity: np.ndarray
    phase_mismatch: np.ndarray
    projector_distance: np.ndarray
    usual_mismatch: np.ndarray
    gauge: str
    tracked_level: int
    E_prime_n: np.ndarray = field(repr=False, default=None)

    @property
    def infidelity(self) -> np.ndarray:
        return 1.0 - self.fidelity

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "fidelity", "phase_mismatch", "projector_distance"])
            for k, t in enumerate(self.grid):
                w.writerow([_fmt(x) for x in (t, self.fidelity[k], self.phase_mismatch[k],
                                              self.projector_distance[k])])


def _continued_eigenvalue(frame):
    from .bounds import bw_series, dense_series

    bw = bw_series(frame)
    if bw.all_converged:
        return bw.E_prime_n
    return np.where(bw.converged, bw.E_prime_n, dense_series(frame).E_prime_n)


def propagate(model: HamiltonianModel, curve: EigenCurve, n: int, t_end=None,
              tol=DEFAULT_TOL, E_prime_n=None) -> EvolutionResult:
    """Evolve ``|n(0)>`` exactly and compare with the tracked level ``n``.

    ``E_prime_n`` defaults to the Brillouin-Wigner eigenvalue of ``H'``
    (dense eigensolve where that fails).  With ``t_end`` the comparison
    stops at that grid sample.
    """
    grid = curve.grid
    if t_end is not None:
        stop = curve.index(t_end) + 1
        grid = grid[:stop]
    else:
        stop = len(grid)
    U = evolve(model, grid, tol)
    vecs = curve.vectors[:stop, :, n]
    psi = U @ vecs[0]
    overlap = np.einsum("ki,ki->k", vecs.conj(), psi)
    fidelity = np.abs(overlap)
    frame = build_frame(curve, n)
    if E_prime_n is None:
        E_prime_n = _continued_eigenvalue(frame)
    E_prime_n = np.asarray(E_prime_n)[:stop]
    phase = cumulative_integral(E_prime_n, grid)
    ref = np.exp(-1j * phase)[:, None] * vecs
    hnn = frame.Hprime[:stop, n, n].real
    usual = np.exp(-1j * cumulative_integral(hnn, grid))[:, None] * vecs
    proj = (psi[:, :, None] * psi.conj()[:, None, :]
            - vecs[:, :, None] * vecs.conj()[:, None, :])
    return EvolutionResult(
        grid=grid, U=U, psi=psi, fidelity=fidelity,
        phase_mismatch=np.linalg.norm(psi - ref, axis=1),
        projector_distance=np.linalg.norm(proj, 2, axis=(1, 2)),
        usual_mismatch=np.linalg.norm(psi - usual, axis=1),
        gauge=str(curve.gauge), tracked_level=n, E_prime_n=E_prime_n,
    )


# --------------------------------------------------------------------------
# Schwinger closed form


def schwinger_frame_matrix(params: SchwingerParams, t) -> np.ndarray:
    """Eigenvector matrix with columns (lower, upper) in the co-rotating gauge.

    In this gauge ``H'`` is the constant
    ``(1/2)[[-delta', Omega'], [Omega', delta']]`` (lower level first).
    """
    t = np.asarray(t, dtype=float)
    half = 0.5 * params.omega * t
    c, s = np.cos(params.theta / 2), np.sin(params.theta / 2)
    em, ep = np.exp(-1j * half), np.exp(1j * half)
    P = np.empty(t.shape + (2, 2), dtype=complex)
    P[..., 0, 0] = -em * s
    P[..., 1, 0] = ep * c
    P[..., 0, 1] = em * c
    P[..., 1, 1] = ep * s
    return P


def schwinger_analytic(params: SchwingerParams, t, n: Optional[int] = None, frame="lab"):
    """Closed-form propagator of the Schwinger model.

    In the co-rotating adiabatic frame, with levels ordered (upper, lower),
    ``U' = [[cos(W t/2) - i (d/W) sin(W t/2), -i (O/W) sin(W t/2)],
    [-i (O/W) sin(W t/2), cos(W t/2) + i (d/W) sin(W t/2)]]`` where
    ``d = omega0 - omega cos(theta)``, ``O = omega sin(theta)`` and
    ``W = sqrt(d^2 + O^2)``.

    ``frame="adiabatic"`` returns ``U'`` with levels in increasing energy
    (the tracked level ``n`` does not change the matrix, only which
    diagonal entry is its amplitude); ``frame="lab"`` returns
    ``P(t) U'(t) P(0)^dagger``.
    """
    t = np.asarray(t, dtype=float)
    d, o, w = params.delta_prime, params.omega_prime, params.rabi_frequency
    cw, sw = np.cos(0.5 * w * t), np.sin(0.5 * w * t)
    Up = np.empty(t.shape + (2, 2), dtype=complex)
    # index 0 is the lower level, whose frame energy is -d/2
    Up[..., 0, 0] = cw + 1j * (d / w) * sw
    Up[..., 1, 1] = cw - 1j * (d / w) * sw
    Up[..., 0, 1] = Up[..., 1, 0] = -1j * (o / w) * sw
    if frame == "adiabatic":
        return Up
    if frame != "lab":
        raise ValueError("frame must be 'lab' or 'adiabatic'")
    P0 = schwinger_frame_matrix(params, 0.0)
    return schwinger_frame_matrix(params, t) @ Up @ P0.conj().T


# --------------------------------------------------------------------------
# repeated Landau-Zener passages


@dataclass(frozen=True)
class StueckelbergPrediction:
    """Single-passage probability, interference phase and multi-passage estimates.

    ``Theta`` is measured from the one-period propagator; ``Theta_approx``
    is the large-amplitude estimate ``alpha / varpi``.
    """

    p1: float
    Theta: float
    pM: dict
    Theta_approx: float

    def at(self, M) -> float:
        return float(self.p1 * np.sin(M * self.Theta) ** 2 / np.cos(self.Theta) ** 2)


def landau_zener_p1(params: CyclingLZParams) -> float:
    return float(np.exp(-0.5 * np.pi * params.Omega ** 2 / (params.alpha * params.varpi)))


def stueckelberg_phase(params: CyclingLZParams, tol=DEFAULT_TOL) -> float:
    """Interference phase from the exact propagator over one drive period.

    The cycling Hamiltonian is traceless, so the one-period propagator is a
    rotation ``exp(-i phi n.sigma)`` with unit determinant.  ``2k``
    passages transfer ``n_perp^2 sin^2(k phi)``, which is the
    ``sin^2(M Theta)`` law with ``Theta = phi / 2``.  ``Theta`` is defined up
    to sign and multiples of pi; the representative nearest ``alpha/varpi``
    is returned.
    """
    T = 2 * params.half_period
    model = cycling_lz(params.alpha, params.varpi, params.Omega, (0.0, T))
    U = evolve(model, [0.0, T], tol)[-1]
    phi = float(np.arccos(np.clip(np.real(np.trace(U)) / 2, -1.0, 1.0)))
    approx = params.alpha / params.varpi
    reps = [s * 0.5 * phi for s in (1.0, -1.0)]
    reps = [r + np.pi * np.round((approx - r) / np.pi) for r in reps]
    return float(min(reps, key=lambda r: abs(r - approx)))


def stueckelberg_prediction(params: CyclingLZParams, M: Sequence[int], Theta=None,
                            tol=DEFAULT_TOL) -> StueckelbergPrediction:
    p1 = landau_zener_p1(params)
    if Theta is None:
        Theta = stueckelberg_phase(params, tol)
    pM = {int(m): float(p1 * np.sin(m * Theta) ** 2 / np.cos(Theta) ** 2) for m in M}
    return StueckelbergPrediction(p1=p1, Theta=float(Theta), pM=pM,
                                  Theta_approx=params.alpha / params.varpi)


def lz_multipassage(params: CyclingLZParams, M, n: int = 0, tol=DEFAULT_TOL):
    """Predicted and measured non-adiabatic probability after ``M`` passages.

    ``M`` may be one even integer or a sequence of them.  The measurement
    is ``1 - |<n(M T1)|Psi(M T1)>|^2`` from exact propagation starting in
    level ``n``; returns ``(prediction, measured)`` with ``measured`` a dict
    keyed by ``M`` (or a float for scalar ``M``).
    """
    Ms = [int(M)] if np.isscalar(M) else [int(m) for m in M]
    if any(m <= 0 or m % 2 for m in Ms):
        raise ValueError("passage counts must be positive and even")
    T1 = params.half_period
    last = max(Ms)
    model = cycling_lz(params.alpha, params.varpi, params.Omega, (0.0, last * T1))
    times = T1 * np.arange(last + 1)
    U = evolve(model, times, tol)
    _, v = np.linalg.eigh(model.eval(times).real)
    psi = U @ v[0, :, n].astype(complex)
    measured = {m: float(1.0 - abs(np.vdot(v[m, :, n], psi[m])) ** 2) for m in Ms}
    pred = stueckelberg_prediction(params, Ms, tol=tol)
    if np.isscalar(M):
        return pred, measured[Ms[0]]
    return pred, measured


# --------------------------------------------------------------------------
# slow-down wrapper


def rescaled_evolution(model: HamiltonianModel, epsilon: float) -> HamiltonianModel:
    """The model run ``1/epsilon`` times slower: ``H_eps(t) = H(epsilon t)``.

    Family parameters that stay meaningful under the rescaling are updated
    (drive frequencies and total times); others are dropped.
    """
    eps = float(epsilon)
    if not eps > 0:
        raise ValueError("epsilon must be positive")
    if eps == 1.0:
        return model
    f = model.evaluator
    d1, d2 = model.derivatives
    derivs = (
        None if d1 is None else (lambda t: eps * np.asarray(d1(eps * np.asarray(t, dtype=float)))),
        None if d2 is None else (lambda t: eps ** 2 * np.asarray(d2(eps * np.asarray(t, dtype=float)))),
    )
    params = {"epsilon": eps, "rescaled_from": model.name}
    p = model.params
    if "schwinger" in p:
        s = p["schwinger"]
        params["schwinger"] = SchwingerParams(s.omega0, s.theta, eps * s.omega)
        params["two_level"] = params["schwinger"].to_two_level()
    if "cycling_lz" in p:
        c = p["cycling_lz"]
        params["cycling_lz"] = CyclingLZParams(c.alpha, eps * c.varpi, c.Omega)
        params["two_level"] = params["cycling_lz"].to_two_level()
    if "interpolating" in p:
        i = p["interpolating"]
        params["interpolating"] = InterpolatingParams(i.H_in, i.H_fin, i.T / eps)
    t0, t1 = model.domain
    return replace(
        model,
        evaluator=lambda t: f(eps * np.asarray(t, dtype=float)),
        domain=(t0 / eps, t1 / eps),
        derivatives=derivs,
        fd_step=None if model.fd_step is None else model.fd_step / eps,
        name=f"{model.name}@{eps:g}",
        params=params,
    )
