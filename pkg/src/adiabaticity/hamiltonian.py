"""Time-dependent Hamiltonian models.

All models use hbar = 1: matrices are in rad/s, times in seconds.  An
evaluator maps an array of times with shape ``S`` to an array of matrices
with shape ``S + (N, N)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DomainError, HermiticityError

HERMITICITY_TOL = 1e-12
FD_STEP_FRACTION = 1e-5
FD2_STEP_FRACTION = 1e-3

SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

Evaluator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class HamiltonianModel:
    """A Hermitian ``N x N`` matrix function of time.

    Parameters
    ----------
    dimension : int
        Hilbert-space dimension, at least 2.
    evaluator : callable
        Vectorised map from times to matrices.
    domain : (float, float)
        Declared time domain ``[t_start, t_end]``.
    derivatives : tuple of callables, optional
        Analytic first and second time derivatives.  Missing entries fall
        back to fourth-order central differences.
    fd_step : float, optional
        Finite-difference step for the first derivative; defaults to
        ``1e-5`` times the domain length.  Second derivatives use a larger
        step (``1e-3`` of the length) to keep roundoff below truncation.
    is_real : bool
        The matrices are real symmetric at every time.
    extendable : bool
        The evaluator stays valid outside ``domain``, so difference
        stencils may cross its boundary.
    """

    dimension: int
    evaluator: Evaluator
    domain: tuple
    derivatives: tuple = (None, None)
    fd_step: Optional[float] = None
    is_real: bool = False
    extendable: bool = True
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dimension < 2:
            raise ValueError("dimension must be at least 2")
        t0, t1 = self.domain
        if not t1 > t0:
            raise ValueError("domain must satisfy t_end > t_start")
        object.__setattr__(self, "domain", (float(t0), float(t1)))

    @property
    def length(self) -> float:
        return self.domain[1] - self.domain[0]

    @property
    def derivative_mode(self) -> str:
        return "analytic" if self.derivatives[0] is not None else "finite_difference"

    def _check_domain(self, t):
        t0, t1 = self.domain
        slack = 1e-12 * max(1.0, abs(t0), abs(t1))
        t = np.asarray(t, dtype=float)
        if np.any(t < t0 - slack) or np.any(t > t1 + slack):
            raise DomainError(f"t outside model domain [{t0}, {t1}]")
        return t

    def eval(self, t) -> np.ndarray:
        """``H(t)``; vectorised over ``t``."""
        t = self._check_domain(t)
        h = np.asarray(self.evaluator(t), dtype=complex)
        check_hermitian(h)
        return h

    __call__ = eval

    def eval_derivative(self, t, order: int = 1) -> np.ndarray:
        """First or second time derivative of ``H`` at ``t``."""
        if order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        t = self._check_domain(t)
        analytic = self.derivatives[order - 1]
        if analytic is not None:
            return np.asarray(analytic(t), dtype=complex)
        if order == 1:
            h = self.fd_step or FD_STEP_FRACTION * self.length
        else:
            h = max(self.fd_step or 0.0, FD2_STEP_FRACTION * self.length)
        return self._central_difference(t, order, h)

    def _central_difference(self, t, order, h):
        if not self.extendable:
            t0, t1 = self.domain
            if np.any(t - 2 * h < t0) or np.any(t + 2 * h > t1):
                raise DomainError("finite-difference stencil leaves the domain")
        f = self.evaluator
        fp2, fp1, fm1, fm2 = f(t + 2 * h), f(t + h), f(t - h), f(t - 2 * h)
        if order == 1:
            return (-fp2 + 8 * fp1 - 8 * fm1 + fm2) / (12 * h)
        return (-fp2 + 16 * fp1 - 30 * f(t) + 16 * fm1 - fm2) / (12 * h * h)


def check_hermitian(h, tol=HERMITICITY_TOL):
    h = np.asarray(h)
    scale = np.max(np.abs(h)) if h.size else 0.0
    err = np.max(np.abs(h - np.swapaxes(h, -1, -2).conj())) if h.size else 0.0
    if err > tol * max(scale, np.finfo(float).tiny):
        raise HermiticityError(f"matrix not Hermitian (|H - H^dag| = {err:.3e})")


# --------------------------------------------------------------------------
# parameter sets


def _as_function(x):
    if callable(x):
        return x
    value = float(x)
    return lambda t: np.full(np.shape(t), value)


def _zero(t):
    return np.zeros(np.shape(t))


def _scalar_derivative(f, t, order, h):
    if order == 1:
        return (-f(t + 2 * h) + 8 * f(t + h) - 8 * f(t - h) + f(t - 2 * h)) / (12 * h)
    return (-f(t + 2 * h) + 16 * f(t + h) - 30 * f(t) + 16 * f(t - h) - f(t - 2 * h)) / (12 * h * h)


@dataclass(frozen=True)
class TwoLevelParams:
    """Spin-in-a-field parametrisation of a traceless two-level Hamiltonian.

    ``H = (omega0/2) [[cos theta, sin theta e^{-i phi}],
                      [sin theta e^{i phi}, -cos theta]]``.

    Each of ``omega0``, ``theta`` and ``phi`` is a callable of ``t`` or a
    constant.  Derivatives that are not supplied are taken by central
    differences with steps scaled by ``time_scale``.
    """

    omega0: object
    theta: object
    phi: object
    omega0_dot: Optional[Callable] = None
    omega0_ddot: Optional[Callable] = None
    theta_dot: Optional[Callable] = None
    theta_ddot: Optional[Callable] = None
    phi_dot: Optional[Callable] = None
    phi_ddot: Optional[Callable] = None
    is_real: bool = False
    time_scale: float = 1.0

    def _deriv(self, name, order):
        given = getattr(self, f"{name}_{'dot' if order == 1 else 'ddot'}")
        if given is not None:
            return given
        base = getattr(self, name)
        if not callable(base):
            return _zero
        f = _as_function(base)
        h = (1e-4 if order == 1 else 1e-3) * self.time_scale
        return lambda t: _scalar_derivative(f, np.asarray(t, dtype=float), order, h)

    def jet(self, t):
        """Values and first two derivatives of (omega0, theta, phi) at ``t``.

        Returns an array of shape ``(3, 3) + shape(t)``: rows are the three
        parameters, columns the derivative order.
        """
        t = np.asarray(t, dtype=float)
        out = np.empty((3, 3) + t.shape)
        for i, name in enumerate(("omega0", "theta", "phi")):
            out[i, 0] = _as_function(getattr(self, name))(t)
            out[i, 1] = self._deriv(name, 1)(t)
            out[i, 2] = self._deriv(name, 2)(t)
        return out


@dataclass(frozen=True)
class SchwingerParams:
    """Constant field precessing about z: ``theta``, ``omega0`` fixed, ``phi = omega t``."""

    omega0: float
    theta: float
    omega: float

    def to_two_level(self) -> TwoLevelParams:
        w = self.omega
        return TwoLevelParams(
            omega0=self.omega0,
            theta=self.theta,
            phi=lambda t: w * np.asarray(t, dtype=float),
            phi_dot=lambda t: np.full(np.shape(t), w),
            phi_ddot=_zero,
            is_real=(w == 0.0 or np.sin(self.theta) == 0.0),
        )

    @property
    def delta_prime(self) -> float:
        """Detuning in the co-rotating adiabatic frame."""
        return self.omega0 - self.omega * np.cos(self.theta)

    @property
    def omega_prime(self) -> float:
        """Coupling in the co-rotating adiabatic frame."""
        return self.omega * np.sin(self.theta)

    @property
    def rabi_frequency(self) -> float:
        return float(np.hypot(self.omega_prime, self.delta_prime))


@dataclass(frozen=True)
class CyclingLZParams:
    """Real cycling Hamiltonian ``(1/2)[[d, W], [W, -d]]`` with ``d = alpha cos(varpi t)``."""

    alpha: float
    varpi: float
    Omega: float

    def __post_init__(self):
        if min(self.alpha, self.varpi, self.Omega) <= 0:
            raise ValueError("alpha, varpi and Omega must be positive")

    @property
    def half_period(self) -> float:
        return np.pi / self.varpi

    def regime_flags(self, ratio=0.2) -> dict:
        """Advisory weak-coupling and large-amplitude flags."""
        return {
            "weak_coupling": self.Omega < ratio * self.alpha,
            "large_amplitude": self.alpha * ratio > self.varpi,
        }

    def detuning(self, t, order=0):
        t = np.asarray(t, dtype=float)
        a, w = self.alpha, self.varpi
        return [a * np.cos(w * t), -a * w * np.sin(w * t), -a * w * w * np.cos(w * t),
                a * w ** 3 * np.sin(w * t)][order]

    def to_two_level(self) -> TwoLevelParams:
        W = self.Omega

        def omega0(t):
            return np.hypot(self.detuning(t), W)

        def omega0_dot(t):
            d = self.detuning(t)
            return d * self.detuning(t, 1) / np.hypot(d, W)

        def omega0_ddot(t):
            d, dd, ddd = self.detuning(t), self.detuning(t, 1), self.detuning(t, 2)
            r = np.hypot(d, W)
            return (dd * dd + d * ddd) / r - (d * dd) ** 2 / r ** 3

        def theta(t):
            return np.arctan2(W, self.detuning(t))

        def theta_dot(t):
            d = self.detuning(t)
            return -W * self.detuning(t, 1) / (d * d + W * W)

        def theta_ddot(t):
            d, dd, ddd = self.detuning(t), self.detuning(t, 1), self.detuning(t, 2)
            r2 = d * d + W * W
            return -W * ddd / r2 + 2 * W * d * dd * dd / r2 ** 2

        return TwoLevelParams(
            omega0=omega0, theta=theta, phi=0.0,
            omega0_dot=omega0_dot, omega0_ddot=omega0_ddot,
            theta_dot=theta_dot, theta_ddot=theta_ddot,
            phi_dot=_zero, phi_ddot=_zero, is_real=True,
        )


@dataclass(frozen=True)
class InterpolatingParams:
    H_in: np.ndarray
    H_fin: np.ndarray
    T: float


# --------------------------------------------------------------------------
# model families


def _bloch_model(b, b_dot, b_ddot, domain, *, is_real, name, params):
    def lift(f):
        return lambda t: 0.5 * np.einsum("...k,kij->...ij", f(t), SIGMA)

    return HamiltonianModel(
        dimension=2,
        evaluator=lift(b),
        domain=domain,
        derivatives=(lift(b_dot), lift(b_ddot)),
        is_real=is_real,
        name=name,
        params=params,
    )


def two_level(params: TwoLevelParams, t_span) -> HamiltonianModel:
    """Two-level model with analytic derivatives by the chain rule."""

    def frames(t):
        (w, wd, wdd), (th, thd, thdd), (ph, phd, phdd) = params.jet(t)
        st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
        z = np.zeros_like(st)
        n = np.stack([st * cp, st * sp, ct], axis=-1)
        n_th = np.stack([ct * cp, ct * sp, -st], axis=-1)
        n_ph = np.stack([-st * sp, st * cp, z], axis=-1)
        n_thph = np.stack([-ct * sp, ct * cp, z], axis=-1)
        n_phph = np.stack([-st * cp, -st * sp, z], axis=-1)
        col = lambda a: np.asarray(a)[..., None]
        n_dot = col(thd) * n_th + col(phd) * n_ph
        n_ddot = (col(thdd) * n_th + col(phdd) * n_ph - col(thd ** 2) * n
                  + 2 * col(thd * phd) * n_thph + col(phd ** 2) * n_phph)
        return col(w), col(wd), col(wdd), n, n_dot, n_ddot

    def b(t):
        w, _, _, n, _, _ = frames(t)
        return w * n

    def b_dot(t):
        w, wd, _, n, nd, _ = frames(t)
        return wd * n + w * nd

    def b_ddot(t):
        w, wd, wdd, n, nd, ndd = frames(t)
        return wdd * n + 2 * wd * nd + w * ndd

    return _bloch_model(b, b_dot, b_ddot, t_span, is_real=params.is_real,
                        name="two_level", params={"two_level": params})


def schwinger(omega0, theta, omega, t_span=(0.0, 1.0)) -> HamiltonianModel:
    p = SchwingerParams(float(omega0), float(theta), float(omega))
    amp = p.omega0 * np.sin(p.theta)

    def b(t):
        t = np.asarray(t, dtype=float)
        return np.stack([amp * np.cos(p.omega * t), amp * np.sin(p.omega * t),
                         np.full(t.shape, p.omega0 * np.cos(p.theta))], axis=-1)

    def b_dot(t):
        t = np.asarray(t, dtype=float)
        return np.stack([-amp * p.omega * np.sin(p.omega * t), amp * p.omega * np.cos(p.omega * t),
                         np.zeros(t.shape)], axis=-1)

    def b_ddot(t):
        t = np.asarray(t, dtype=float)
        w2 = amp * p.omega ** 2
        return np.stack([-w2 * np.cos(p.omega * t), -w2 * np.sin(p.omega * t),
                         np.zeros(t.shape)], axis=-1)

    model = _bloch_model(b, b_dot, b_ddot, t_span, is_real=p.to_two_level().is_real,
                         name="schwinger", params={"schwinger": p})
    model.params["two_level"] = p.to_two_level()
    return model


def cycling_lz(alpha, varpi, Omega, t_span=None) -> HamiltonianModel:
    p = CyclingLZParams(float(alpha), float(varpi), float(Omega))
    if t_span is None:
        t_span = (0.0, 2 * p.half_period)

    def b(t):
        t = np.asarray(t, dtype=float)
        return np.stack([np.full(t.shape, p.Omega), np.zeros(t.shape), p.detuning(t)], axis=-1)

    def b_dot(t):
        t = np.asarray(t, dtype=float)
        z = np.zeros(t.shape)
        return np.stack([z, z, p.detuning(t, 1)], axis=-1)

    def b_ddot(t):
        t = np.asarray(t, dtype=float)
        z = np.zeros(t.shape)
        return np.stack([z, z, p.detuning(t, 2)], axis=-1)

    return _bloch_model(b, b_dot, b_ddot, t_span, is_real=True, name="cycling_lz",
                        params={"cycling_lz": p, "two_level": p.to_two_level()})


def interpolating(H_in, H_fin, T) -> HamiltonianModel:
    """``H(t) = H_in (1 - t/T) + H_fin t/T`` on ``[0, T]``."""
    H_in = np.asarray(H_in, dtype=complex)
    H_fin = np.asarray(H_fin, dtype=complex)
    check_hermitian(H_in)
    check_hermitian(H_fin)
    slope = (H_fin - H_in) / T

    def h(t):
        t = np.asarray(t, dtype=float)[..., None, None]
        return H_in + t * slope

    def h_dot(t):
        return np.broadcast_to(slope, np.shape(t) + slope.shape).copy()

    def h_ddot(t):
        return np.zeros(np.shape(t) + slope.shape, dtype=complex)

    real = not (np.any(H_in.imag) or np.any(H_fin.imag))
    return HamiltonianModel(
        dimension=H_in.shape[0], evaluator=h, domain=(0.0, float(T)),
        derivatives=(h_dot, h_ddot), is_real=real, name="interpolating",
        params={"interpolating": InterpolatingParams(H_in, H_fin, float(T))},
    )


def constant(H, t_span=(0.0, 1.0)) -> HamiltonianModel:
    H = np.asarray(H, dtype=complex)
    check_hermitian(H)

    def h(t):
        return np.broadcast_to(H, np.shape(t) + H.shape).copy()

    def zero(t):
        return np.zeros(np.shape(t) + H.shape, dtype=complex)

    return HamiltonianModel(dimension=H.shape[0], evaluator=h, domain=t_span,
                            derivatives=(zero, zero), is_real=not np.any(H.imag),
                            name="constant", params={"H": H})


def random_hermitian(rng, dim, real=False):
    a = rng.normal(size=(dim, dim))
    if not real:
        a = a + 1j * rng.normal(size=(dim, dim))
    return 0.5 * (a + a.conj().T)


def random_smooth(dim=4, seed=0, t_span=(0.0, 4.0), amplitude=0.15, spacing=1.0,
                  max_frequency=1.0) -> HamiltonianModel:
    """Random complex model ``A + a (B cos(nu1 t) + C sin(nu2 t + phase))``.

    ``A`` has levels spaced by at least ``spacing``; ``B`` and ``C`` have unit
    spectral norm, so by Weyl's inequality every instantaneous gap stays
    above ``spacing - 4 * amplitude``.
    """
    rng = np.random.default_rng(seed)
    levels = np.cumsum(spacing * (1.0 + 0.5 * rng.random(dim)))
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    A = (q * levels) @ q.conj().T
    B = random_hermitian(rng, dim)
    C = random_hermitian(rng, dim)
    B /= np.linalg.norm(B, 2)
    C /= np.linalg.norm(C, 2)
    nu1, nu2 = max_frequency * (0.3 + 0.7 * rng.random(2))
    ph = 2 * np.pi * rng.random()
    a = amplitude

    def h(t):
        t = np.asarray(t, dtype=float)[..., None, None]
        return A + a * (B * np.cos(nu1 * t) + C * np.sin(nu2 * t + ph))

    def h_dot(t):
        t = np.asarray(t, dtype=float)[..., None, None]
        return a * (-nu1 * B * np.sin(nu1 * t) + nu2 * C * np.cos(nu2 * t + ph))

    def h_ddot(t):
        t = np.asarray(t, dtype=float)[..., None, None]
        return a * (-nu1 ** 2 * B * np.cos(nu1 * t) - nu2 ** 2 * C * np.sin(nu2 * t + ph))

    return HamiltonianModel(dimension=dim, evaluator=h, domain=t_span,
                            derivatives=(h_dot, h_ddot), name="random_smooth",
                            params={"seed": seed, "amplitude": amplitude})


# --------------------------------------------------------------------------
# tabulated data


def tabulated(times, matrices, name="tabulated") -> HamiltonianModel:
    """Cubic-spline model through sampled Hermitian matrices."""
    times = np.asarray(times, dtype=float)
    matrices = np.asarray(matrices, dtype=complex)
    if times.ndim != 1 or len(times) < 4:
        raise ValueError("need at least four time samples")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    if matrices.shape[0] != len(times) or matrices.shape[1] != matrices.shape[2]:
        raise ValueError("matrices must have shape (K, N, N)")
    for m in matrices:
        check_hermitian(m)
    spline = CubicSpline(times, matrices.real, axis=0)
    spline_im = CubicSpline(times, matrices.imag, axis=0)

    def evaluate(order):
        def f(t):
            t = np.asarray(t, dtype=float)
            h = spline(t, order) + 1j * spline_im(t, order)
            return 0.5 * (h + np.swapaxes(h, -1, -2).conj())
        return f

    return HamiltonianModel(
        dimension=matrices.shape[1], evaluator=evaluate(0),
        domain=(times[0], times[-1]), derivatives=(evaluate(1), evaluate(2)),
        is_real=not np.any(matrices.imag), extendable=False, name=name,
        params={"times": times},
    )


def _header(dim):
    cols = ["t"]
    for i in range(dim):
        for j in range(dim):
            cols += [f"re(H[{i}][{j}])", f"im(H[{i}][{j}])"]
    return cols


def save_tabulated(path, times, matrices):
    matrices = np.asarray(matrices, dtype=complex)
    dim = matrices.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_header(dim))
        for t, m in zip(times, matrices):
            flat = m.reshape(-1)
            row = [t]
            for z in flat:
                row += [z.real, z.imag]
            w.writerow([format(float(x), ".17g") for x in row])


def load_tabulated(path) -> HamiltonianModel:
    """Read the row-major ``t, re(H[0][0]), im(H[0][0]), ...`` CSV format."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = [c.strip() for c in rows[0]]
    ncols = len(header) - 1
    dim = int(round(np.sqrt(ncols / 2)))
    if 2 * dim * dim != ncols or header != _header(dim):
        raise ValueError(f"{path}: unexpected header for a tabulated Hamiltonian")
    data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    times = data[:, 0]
    vals = data[:, 1::2] + 1j * data[:, 2::2]
    return tabulated(times, vals.reshape(len(times), dim, dim), name=path.stem)


FAMILIES = {
    "schwinger": schwinger,
    "cycling_lz": cycling_lz,
    "interpolating": interpolating,
    "constant": constant,
    "random_smooth": random_smooth,
    "tabulated": load_tabulated,
}
