"""High-accuracy 1-D quadrature and closed forms for the marginal target.

This module is the independent oracle layer behind the statistical tests:
expectations under the 1-D marginal pi_1 ∝ exp(−v), the normalizing
constant, the cosine moment of the perturbed marginal, exact trigonometric
Gaussian moments, the KL divergence of the standard Gaussian from the
perturbed product target, the per-coordinate acceptance factor of the
collapse mechanism, the equal-covariance Gaussian TV closed form, and an
inverse-CDF table for exact sampling.

The quadrature contract is absolute tolerance with refinement until the
error estimate passes; integration is delegated to adaptive Gauss-Kronrod
(scipy.integrate.quad) and re-run with a larger subdivision limit before
giving up with :class:`AccuracyError`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator
from scipy.special import erfc

from .potentials import ADVERSARIAL, CUSTOM, GAUSSIAN, Potential, UnsupportedTargetError

SQRT_2PI = math.sqrt(2.0 * math.pi)


class AccuracyError(RuntimeError):
    """Adaptive refinement could not certify the requested tolerance."""


class ConsistencyError(RuntimeError):
    """A numerically constructed object violated its own invariants."""


@dataclass(frozen=True)
class Profile1D:
    """1-D potential profile v with certified integration domain [−R, R].

    ``curvature_lb`` and ``offset`` certify the Gaussian domination
    v(t) ≥ curvature_lb·t²/2 − offset used to bound the tail mass beyond
    ±radius below ``tol``. ``key`` is a hashable identity for caching
    (None disables caching).
    """

    v: Callable
    radius: float
    tol: float = 1e-10
    curvature_lb: float = 1.0
    offset: float = 0.0
    key: tuple | None = None


def _tail_mass_bound(radius: float, curvature_lb: float, offset: float) -> float:
    # 2·e^offset ∫_R^∞ e^{−lb·t²/2} dt = e^offset · sqrt(2π/lb) · erfc(R·sqrt(lb/2))
    lb = curvature_lb
    return math.exp(offset) * math.sqrt(2.0 * math.pi / lb) * float(
        erfc(radius * math.sqrt(lb / 2.0))
    )


def make_profile(
    v: Callable,
    curvature_lb: float,
    offset: float = 0.0,
    tol: float = 1e-10,
    radius: float | None = None,
    key: tuple | None = None,
) -> Profile1D:
    """Construct a profile with the default truncation radius and certify its tail.

    The radius defaults to max(10, 10/sqrt(curvature_lb)); the dominating
    Gaussian bound must put less than ``tol`` mass beyond ±radius.
    """
    if curvature_lb <= 0:
        raise ValueError("curvature_lb must be positive")
    if radius is None:
        radius = max(10.0, 10.0 / math.sqrt(curvature_lb))
    if _tail_mass_bound(radius, curvature_lb, offset) > tol:
        raise ValueError(
            f"tail mass beyond ±{radius} not certified below tol={tol}"
        )
    return Profile1D(
        v=v, radius=float(radius), tol=tol,
        curvature_lb=float(curvature_lb), offset=float(offset), key=key,
    )


def gaussian_profile(tol: float = 1e-10) -> Profile1D:
    """Profile of the standard Gaussian marginal, v(t) = t²/2."""
    return make_profile(
        lambda t: 0.5 * np.asarray(t, dtype=float) ** 2,
        curvature_lb=1.0, offset=0.0, tol=tol, key=("gaussian",),
    )


def adversarial_profile(
    d: int, eta: float, amplitude: float | None = None, tol: float = 1e-10
) -> Profile1D:
    """Profile of the perturbed marginal, v(t) = t²/2 − amplitude·cos(d^eta·t).

    ``amplitude`` defaults to 1/(2 d^{2·eta}); amplitude=0 degenerates to the
    pure Gaussian profile (useful as a control).
    """
    if amplitude is None:
        amplitude = 0.5 * d ** (-2.0 * eta)
    if amplitude < 0:
        raise ValueError("amplitude must be nonnegative")
    w = d**eta
    amp = float(amplitude)

    def v(t):
        t = np.asarray(t, dtype=float)
        return 0.5 * t * t - amp * np.cos(w * t)

    return make_profile(
        v, curvature_lb=0.5, offset=amp, tol=tol,
        key=("adversarial", int(d), float(eta), amp),
    )


def profile_for(p: Potential, tol: float = 1e-10) -> Profile1D:
    """1-D marginal profile of a separable target."""
    if not p.separable:
        raise UnsupportedTargetError(f"{p.kind} target has no 1-D marginal profile")
    if p.kind == GAUSSIAN:
        return gaussian_profile(tol=tol)
    if p.kind == ADVERSARIAL:
        return adversarial_profile(p.d, p.eta, tol=tol)
    # Custom profiles are symmetric with a minimum at 0 per the package
    # contract, so v(t) >= v(0) + alpha t²/2 certifies the tail.
    v0 = float(p.profile_value(0.0))
    return make_profile(
        p.profile_value, curvature_lb=p.alpha, offset=max(0.0, -v0), tol=tol,
        key=None,
    )


def _integrate(f, lo: float, hi: float, tol: float) -> float:
    """Adaptive quadrature with refinement until the error estimate <= tol."""
    for limit in (400, 4000):
        out = integrate.quad(
            f, lo, hi, epsabs=tol / 2.0, epsrel=1e-12, limit=limit, full_output=1
        )
        val, abserr = out[0], out[1]
        if abserr <= tol:
            return float(val)
    raise AccuracyError(
        f"quadrature error estimate {abserr:.3e} exceeds tolerance {tol:.3e}"
    )


def normalizing_constant(prof: Profile1D) -> float:
    """Z = ∫ exp(−v) over [−R, R], to the profile's absolute tolerance."""
    return _integrate(
        lambda t: math.exp(-float(prof.v(t))), -prof.radius, prof.radius, prof.tol
    )


def quad_expectation(prof: Profile1D, g: Callable) -> float:
    """E_{pi_1}[g] = ∫ g·exp(−v) / Z, to roughly the profile's tolerance.

    ``g`` must be scalar-evaluable and dominated by a polynomial so the
    truncated domain carries the full integral up to the certified tail.
    """
    inner = prof.tol / 4.0
    z = _integrate(lambda t: math.exp(-float(prof.v(t))), -prof.radius, prof.radius, inner)
    num = _integrate(
        lambda t: float(g(t)) * math.exp(-float(prof.v(t))),
        -prof.radius, prof.radius, inner,
    )
    return num / z


def expected_cos(prof: Profile1D, eta: float, d: int) -> float:
    """E_{pi_1}[cos(d^eta · x)] under the profile's marginal."""
    w = d**eta
    return quad_expectation(prof, lambda t: math.cos(w * t))


def trig_sin_moment(ell: int, a: float, b: float, gamma: float, d: int) -> float:
    """Exact E[xi^ell · sin(a + b·d^gamma·xi)] for standard Gaussian xi.

    Closed form via derivatives of the Gaussian characteristic function at
    t = b·d^gamma; supported for ell in 0..4.
    """
    if not isinstance(ell, (int, np.integer)) or not 0 <= ell <= 4:
        raise ValueError(f"ell must be an integer in 0..4, got {ell}")
    t = b * d**gamma
    damp = math.exp(-0.5 * t * t)
    if ell == 0:
        return math.sin(a) * damp
    if ell == 1:
        return math.cos(a) * t * damp
    if ell == 2:
        return -math.sin(a) * (t * t - 1.0) * damp
    if ell == 3:
        return -math.cos(a) * (t**3 - 3.0 * t) * damp
    return math.sin(a) * (t**4 - 6.0 * t * t + 3.0) * damp


def kl_gaussian_vs_adversarial(
    eta: float, d: int, amplitude: float | None = None, tol: float = 1e-10
) -> float:
    """KL(N(0, I_d) || perturbed product target) from quadrature + closed form.

    Equals d·[ln(Z/sqrt(2π)) − amplitude·E_gamma cos(d^eta·xi)] with the
    Gaussian cosine moment available exactly as exp(−d^{2·eta}/2).
    """
    if not 0.0 < eta < 0.25:
        raise ValueError(f"eta must lie in (0, 1/4), got {eta}")
    if amplitude is None:
        amplitude = 0.5 * d ** (-2.0 * eta)
    if amplitude == 0.0:
        return 0.0
    prof = adversarial_profile(d, eta, amplitude=amplitude, tol=tol)
    z = normalizing_constant(prof)
    gaussian_cos = math.exp(-0.5 * d ** (2.0 * eta))
    return d * (math.log(z / SQRT_2PI) - amplitude * gaussian_cos)


def coordinate_factor(
    x1: float, h: float, eta: float, d: int,
    amplitude: float | None = None, tol: float = 1e-10,
) -> float:
    """Per-coordinate acceptance factor of the collapse mechanism.

    For y drawn from N((1−h)·x1/(1+h²), 2h/(1+h²)), returns

        E exp[ amp·cos(w·y) + ((1−h)·y − x1)·(amp·w/2)·sin(w·y)
               − (h/4)·(amp·w)²·sin²(w·y) ]

    with w = d^eta and amp defaulting to 1/(2 d^{2·eta}). Integration is in
    the standardized variable y = m + s·xi with xi standard Gaussian.
    """
    if not 0.0 < h < 1.0:
        raise ValueError(f"h must lie in (0, 1), got {h}")
    if amplitude is None:
        amplitude = 0.5 * d ** (-2.0 * eta)
    if amplitude == 0.0:
        return 1.0
    amp = float(amplitude)
    w = d**eta
    m = (1.0 - h) * x1 / (1.0 + h * h)
    s = math.sqrt(2.0 * h / (1.0 + h * h))

    def integrand(xi: float) -> float:
        y = m + s * xi
        sin_wy = math.sin(w * y)
        expo = (
            amp * math.cos(w * y)
            + ((1.0 - h) * y - x1) * (0.5 * amp * w) * sin_wy
            - 0.25 * h * (amp * w * sin_wy) ** 2
        )
        return math.exp(expo - 0.5 * xi * xi) / SQRT_2PI

    return _integrate(integrand, -12.0, 12.0, tol)


def gaussian_tv_equal_cov(mean_dist: float, sigma2: float) -> float:
    """TV distance between N(m1, sigma2·I) and N(m2, sigma2·I).

    Depends only on Δ = ||m1 − m2|| and equals 2·Phi(Δ/(2σ)) − 1.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    z = abs(mean_dist) / (2.0 * math.sqrt(sigma2))
    return math.erf(z / math.sqrt(2.0))


class CDFTable:
    """Monotone CDF table of a 1-D marginal with interpolated inverse.

    Immutable after construction. ``inverse`` maps uniforms to samples,
    ``cdf_at`` evaluates the CDF; both accept scalars or arrays.
    """

    def __init__(self, grid: np.ndarray, cdf: np.ndarray, tol: float):
        grid = np.asarray(grid, dtype=float)
        cdf = np.asarray(cdf, dtype=float)
        if grid.ndim != 1 or grid.shape != cdf.shape:
            raise ValueError("grid and cdf must be matching 1-D arrays")
        if np.any(np.diff(cdf) < 0) or not np.all(np.isfinite(cdf)):
            raise ConsistencyError("numeric CDF is not nondecreasing")
        if cdf[0] > tol or cdf[-1] < 1.0 - tol:
            raise ConsistencyError("CDF endpoints violate the tail tolerance")
        self.grid = grid
        self.cdf = cdf
        self.tol = tol
        # Strictly increasing subsequence for the inverse; ties can only
        # occur where the density underflows in the far tails.
        keep = np.concatenate(([True], np.diff(cdf) > 0))
        self._forward = PchipInterpolator(grid, cdf, extrapolate=False)
        self._inverse = PchipInterpolator(cdf[keep], grid[keep], extrapolate=False)
        self._u_lo = float(cdf[keep][0])
        self._u_hi = float(cdf[keep][-1])

    def inverse(self, u):
        """Quantile function evaluated by monotone interpolation."""
        u = np.clip(np.asarray(u, dtype=float), self._u_lo, self._u_hi)
        out = self._inverse(u)
        return float(out) if out.ndim == 0 else out

    def cdf_at(self, x):
        """CDF evaluated by monotone interpolation; clamped outside the grid."""
        x = np.asarray(x, dtype=float)
        clipped = np.clip(x, self.grid[0], self.grid[-1])
        out = self._forward(clipped)
        return float(out) if out.ndim == 0 else out


def inverse_cdf_table(prof: Profile1D, n_grid: int = 8193) -> CDFTable:
    """Tabulate the profile's CDF on a uniform grid with per-cell Simpson rule.

    The tail mass beyond the grid is certified below the profile tolerance
    at construction time, so the table is normalized to [0, 1] exactly.
    """
    if n_grid < 64:
        raise ValueError(f"n_grid must be at least 64, got {n_grid}")
    grid = np.linspace(-prof.radius, prof.radius, n_grid)
    mids = 0.5 * (grid[:-1] + grid[1:])
    f_nodes = np.exp(-np.asarray(prof.v(grid), dtype=float))
    f_mids = np.exp(-np.asarray(prof.v(mids), dtype=float))
    dx = grid[1] - grid[0]
    increments = (dx / 6.0) * (f_nodes[:-1] + 4.0 * f_mids + f_nodes[1:])
    cdf = np.concatenate(([0.0], np.cumsum(increments)))
    cdf /= cdf[-1]
    return CDFTable(grid, cdf, tol=prof.tol)
