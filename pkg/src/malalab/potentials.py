"""Target potentials for the sampling laboratory.

Every target is a distribution pi ∝ exp(-V) on R^d whose potential V carries
certified curvature bounds alpha·I ⪯ V'' ⪯ beta·I. Built-in families:

* ``gaussian(d)`` — standard Gaussian, V(x) = ||x||²/2, alpha = beta = 1.
* ``adversarial_cosine(d, eta)`` — cosine-perturbed Gaussian,

      V(x) = ||x||²/2 − (1/(2 d^{2·eta})) · Σ_i cos(d^eta · x_i),

  with eta in the open interval (0, 1/4). The 1-D profile has curvature
  v''(t) = 1 + cos(d^eta·t)/2, so the potential is exactly 1/2-strongly
  convex and 3/2-smooth for every admissible eta.
* ``custom_separable(d, v, dv, curvature_range)`` — caller-supplied 1-D
  profile applied coordinate-wise. The curvature range is the caller's
  claim; it is only checked numerically by :func:`verify_regularity`.

Potentials are deliberately NOT shifted to V(0) = 0: every consumer in this
package (acceptance ratios, quadrature weights, diagnostics) uses potential
differences only, so additive constants are irrelevant, and the perturbed
target keeps its natural value V(0) = −d^{1−2·eta}/2.

Instances are frozen and safe to share across concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

GAUSSIAN = "gaussian"
ADVERSARIAL = "adversarial"
CUSTOM = "custom"

#: eta = 1/4 − delta presets for the perturbed target.
ETA_PRESETS = {"delta=0.05": 0.20, "delta=0.055": 0.195}


class UnsupportedTargetError(ValueError):
    """An operation was asked of a target kind that cannot support it."""


@dataclass(frozen=True)
class Potential:
    """Immutable description of a target pi ∝ exp(-V).

    ``alpha`` and ``beta`` are the certified strong-convexity and smoothness
    constants of V; for ``custom`` kinds they are the caller's claim. For
    separable kinds V(x) = Σ_i v(x_i) with the 1-D profile exposed through
    :meth:`profile_value` / :meth:`profile_grad`.
    """

    kind: str
    d: int
    alpha: float
    beta: float
    separable: bool
    eta: float | None = None
    _profile_v: Callable | None = field(default=None, repr=False, compare=False)
    _profile_dv: Callable | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d}")
        if not (0 < self.alpha <= self.beta):
            raise ValueError(
                f"need 0 < alpha <= beta, got alpha={self.alpha}, beta={self.beta}"
            )

    # -- evaluation -------------------------------------------------------

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.d:
            raise ValueError(
                f"input has trailing dimension {x.shape[-1] if x.ndim else 0}, "
                f"expected {self.d}"
            )
        if not np.all(np.isfinite(x)):
            raise ValueError("input contains non-finite entries")
        return x

    def value(self, x) -> float | np.ndarray:
        """V(x). Accepts a single point (d,) or a batch (..., d)."""
        x = self._check_input(x)
        if self.kind == GAUSSIAN:
            out = 0.5 * np.sum(x * x, axis=-1)
        elif self.kind == ADVERSARIAL:
            w = self.d**self.eta
            amp = 0.5 * self.d ** (-2.0 * self.eta)
            out = 0.5 * np.sum(x * x, axis=-1) - amp * np.sum(np.cos(w * x), axis=-1)
        else:
            out = np.sum(self._profile_v(x), axis=-1)
        return float(out) if out.ndim == 0 else out

    def grad(self, x) -> np.ndarray:
        """∇V(x), same leading shape as the input."""
        x = self._check_input(x)
        if self.kind == GAUSSIAN:
            return x.copy()
        if self.kind == ADVERSARIAL:
            w = self.d**self.eta
            return x + np.sin(w * x) / (2.0 * self.d**self.eta)
        return np.asarray(self._profile_dv(x), dtype=float)

    def value_and_grad(self, x):
        """(V(x), ∇V(x)) in one call; batched like :meth:`value`."""
        return self.value(x), self.grad(x)

    # -- 1-D profile (separable kinds only) --------------------------------

    def profile_value(self, t):
        """1-D profile v with V(x) = Σ_i v(x_i)."""
        if not self.separable:
            raise UnsupportedTargetError(f"{self.kind} target has no 1-D profile")
        t = np.asarray(t, dtype=float)
        if self.kind == GAUSSIAN:
            return 0.5 * t * t
        if self.kind == ADVERSARIAL:
            w = self.d**self.eta
            amp = 0.5 * self.d ** (-2.0 * self.eta)
            return 0.5 * t * t - amp * np.cos(w * t)
        return np.asarray(self._profile_v(t), dtype=float)

    def profile_grad(self, t):
        """Derivative v' of the 1-D profile."""
        if not self.separable:
            raise UnsupportedTargetError(f"{self.kind} target has no 1-D profile")
        t = np.asarray(t, dtype=float)
        if self.kind == GAUSSIAN:
            return t.copy()
        if self.kind == ADVERSARIAL:
            w = self.d**self.eta
            return t + np.sin(w * t) / (2.0 * self.d**self.eta)
        return np.asarray(self._profile_dv(t), dtype=float)

    def cache_key(self) -> tuple | None:
        """Hashable identity for table caching; None for custom profiles."""
        if self.kind == CUSTOM:
            return None
        return (self.kind, self.d, self.eta)


def gaussian(d: int) -> Potential:
    """Standard Gaussian target on R^d."""
    return Potential(kind=GAUSSIAN, d=d, alpha=1.0, beta=1.0, separable=True)


def adversarial_cosine(d: int, eta: float) -> Potential:
    """Cosine-perturbed Gaussian target; eta must lie in the open (0, 1/4)."""
    if not 0.0 < eta < 0.25:
        raise ValueError(f"eta must lie in the open interval (0, 1/4), got {eta}")
    return Potential(
        kind=ADVERSARIAL, d=d, alpha=0.5, beta=1.5, separable=True, eta=float(eta)
    )


def custom_separable(
    d: int,
    v: Callable,
    dv: Callable,
    curvature_range: tuple[float, float],
) -> Potential:
    """Separable target from a caller-supplied vectorized 1-D profile.

    ``v`` and ``dv`` must accept numpy arrays elementwise. ``curvature_range``
    = (a, b) is the caller's claim that a <= v'' <= b; it is trusted by every
    consumer and only checked by :func:`verify_regularity`.
    """
    a, b = curvature_range
    return Potential(
        kind=CUSTOM,
        d=d,
        alpha=float(a),
        beta=float(b),
        separable=True,
        _profile_v=v,
        _profile_dv=dv,
    )


def convexity_bounds(p: Potential) -> tuple[float, float]:
    """Certified (alpha, beta) curvature constants of the target."""
    return p.alpha, p.beta


def evaluate(p: Potential, x):
    """(V(x), ∇V(x)); functional spelling of :meth:`Potential.value_and_grad`."""
    return p.value_and_grad(x)


@dataclass(frozen=True)
class RegularityReport:
    """Outcome of numerically probing the claimed curvature bounds."""

    n_probes: int
    eps: float
    tol: float
    alpha: float
    beta: float
    min_curvature: float
    max_curvature: float
    n_below_alpha: int
    n_above_beta: int
    passed: bool


def verify_regularity(
    p: Potential, n_probes: int, seed, eps: float = 1e-3, tol: float = 1e-3
) -> RegularityReport:
    """Probe directional second differences against the claimed (alpha, beta).

    Draws random points x = r·u with log-uniform radius r and uniform unit
    direction u (so the origin's neighborhood is probed), and checks that

        (V(x + eps·u') − 2 V(x) + V(x − eps·u')) / eps²

    lies in [alpha − tol, beta + tol] for a fresh unit direction u'. Failures
    are reported, not raised.
    """
    from .rng import substream

    if n_probes < 1:
        raise ValueError("n_probes must be >= 1")
    rng = substream(seed, "verify-regularity")
    curvs = np.empty(n_probes)
    for i in range(n_probes):
        u = rng.standard_normal(p.d)
        u /= np.linalg.norm(u)
        r = np.exp(rng.uniform(np.log(1e-3), np.log(4.0)))
        x = r * u
        w = rng.standard_normal(p.d)
        w /= np.linalg.norm(w)
        vp = p.value(x + eps * w)
        v0 = p.value(x)
        vm = p.value(x - eps * w)
        curvs[i] = (vp - 2.0 * v0 + vm) / (eps * eps)
    n_below = int(np.sum(curvs < p.alpha - tol))
    n_above = int(np.sum(curvs > p.beta + tol))
    return RegularityReport(
        n_probes=n_probes,
        eps=eps,
        tol=tol,
        alpha=p.alpha,
        beta=p.beta,
        min_curvature=float(curvs.min()),
        max_curvature=float(curvs.max()),
        n_below_alpha=n_below,
        n_above_beta=n_above,
        passed=(n_below == 0 and n_above == 0),
    )


def parse_potential(text: str) -> Potential:
    """Build a built-in target from a plain-text key=value block.

    Recognized keys: ``kind`` (gaussian | adversarial), ``d``, and ``eta``
    (adversarial only). Blank lines and ``#`` comments are ignored.
    """
    fields: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"expected key=value, got {line!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key in fields:
            raise ValueError(f"duplicate key {key!r}")
        fields[key] = val
    unknown = set(fields) - {"kind", "d", "eta"}
    if unknown:
        raise ValueError(f"unknown keys: {sorted(unknown)}")
    if "kind" not in fields or "d" not in fields:
        raise ValueError("potential spec needs at least kind= and d=")
    kind = fields["kind"].lower()
    d = int(fields["d"])
    if kind == GAUSSIAN:
        if "eta" in fields:
            raise ValueError("eta is only meaningful for kind=adversarial")
        return gaussian(d)
    if kind == ADVERSARIAL:
        if "eta" not in fields:
            raise ValueError("kind=adversarial requires eta=")
        return adversarial_cosine(d, float(fields["eta"]))
    raise ValueError(f"unknown kind {fields['kind']!r}")
