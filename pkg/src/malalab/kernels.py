"""Markov transition kernels and chain execution.

The proposal is one unadjusted Langevin step,

    y = x − h·∇V(x) + sqrt(2h)·xi,   xi ~ N(0, I_d),

i.e. Q(x, ·) = N(x − h·∇V(x), 2h·I_d). MALA follows the proposal with an
accept-reject step using

    log a(x, y) = V(x) − V(y)
                  + (||y − x + h·∇V(x)||² − ||x − y + h·∇V(y)||²) / (4h),

and rejection leaves the state bitwise unchanged (the kernel keeps an atom
at x). ULA runs the same proposal unadjusted. For the Gaussian target the
time-h law of the continuous Langevin diffusion is the exact
Ornstein-Uhlenbeck kernel N(e^{−h}·x, (1 − e^{−2h})·I_d); for general
targets a fine Euler discretization approximates it.

Acceptance tests are done in log space, log u <= log a with u ~ Uniform(0,1],
which is overflow-safe for large ||x||². All randomness is drawn from
generators derived via :mod:`malalab.rng`, so equal seeds give bitwise-equal
trajectories. Distinct chains never share mutable state; a single
:class:`ChainState` must not be advanced concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import oracle1d
from .potentials import Potential, UnsupportedTargetError
from .rng import substream

MALA = "mala"
ULA = "ula"
OU_EXACT = "ou_exact"
DIFFUSION_REF = "diffusion_ref"
_VARIANTS = (MALA, ULA, OU_EXACT, DIFFUSION_REF)


@dataclass(frozen=True)
class KernelParams:
    """Step size and kernel variant; ``substeps`` applies to diffusion_ref only."""

    h: float
    variant: str = MALA
    substeps: int = 1

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError(f"step size must be positive, got {self.h}")
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")


@dataclass
class ChainState:
    """Mutable chain head: position, cached potential value/gradient, RNG.

    ``cached_grad`` always equals ∇V(x); it is refreshed only on acceptance,
    which halves gradient evaluations at low acceptance rates.
    """

    x: np.ndarray
    cached_value: float
    cached_grad: np.ndarray
    rng: np.random.Generator
    step_index: int = 0


@dataclass(frozen=True)
class StepRecord:
    """One realized transition."""

    proposal: np.ndarray
    log_ratio: float
    accepted: bool
    sq_displacement_coord1: float


def init_chain(p: Potential, x0, seed) -> ChainState:
    """Fresh chain state at x0 with its own derived RNG stream."""
    x0 = np.array(x0, dtype=float)
    value, grad = p.value_and_grad(x0)
    return ChainState(
        x=x0, cached_value=float(value), cached_grad=grad,
        rng=substream(seed, "chain"),
    )


def propose_mala(p: Potential, h: float, x, rng) -> np.ndarray:
    """Draw y ~ N(x − h·∇V(x), 2h·I); accepts a batch (..., d) of states."""
    if h <= 0:
        raise ValueError("step size must be positive")
    x = np.asarray(x, dtype=float)
    return x - h * p.grad(x) + math.sqrt(2.0 * h) * rng.standard_normal(x.shape)


def _log_ratio_parts(h, x, value_x, grad_x, y, value_y, grad_y):
    # Term order is chosen so that swapping (x, y) negates the result
    # bitwise: a−b = −(b−a) and ||·||² of identically constructed vectors
    # reuse the same floats.
    forward = np.sum((y - x + h * grad_x) ** 2, axis=-1)
    backward = np.sum((x - y + h * grad_y) ** 2, axis=-1)
    return (value_x - value_y) + (forward - backward) / (4.0 * h)


def log_accept_ratio(p: Potential, h: float, x, y):
    """log a(x, y) = log[pi(y)·Q(y, x)] − log[pi(x)·Q(x, y)].

    Exactly antisymmetric under swapping x and y (bitwise, not just up to
    rounding). ``y`` may be a batch (n, d) against a single x, or both may
    be batches of equal shape.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    value_x, grad_x = p.value_and_grad(x)
    value_y, grad_y = p.value_and_grad(y)
    out = _log_ratio_parts(h, x, value_x, grad_x, y, value_y, grad_y)
    if not np.all(np.isfinite(np.atleast_1d(out))):
        raise FloatingPointError("non-finite acceptance ratio")
    return float(out) if np.ndim(out) == 0 else out


def _uniform_open(rng, size=None):
    # Uniform on (0, 1]: keeps log(u) finite.
    return 1.0 - rng.random(size)


def mala_step(p: Potential, params: KernelParams, s: ChainState):
    """Advance one MALA transition; returns (state, record).

    The state is updated in place (and returned): on acceptance the position
    and cached value/gradient move to the proposal; on rejection the position
    array is left untouched.
    """
    if params.variant != MALA:
        raise ValueError(f"mala_step needs variant='mala', got {params.variant!r}")
    h = params.h
    y = s.x - h * s.cached_grad + math.sqrt(2.0 * h) * s.rng.standard_normal(s.x.shape)
    value_y, grad_y = p.value_and_grad(y)
    log_ratio = float(
        _log_ratio_parts(h, s.x, s.cached_value, s.cached_grad, y, value_y, grad_y)
    )
    accepted = math.log(_uniform_open(s.rng)) <= log_ratio
    if accepted:
        sq_disp = float((s.x[0] - y[0]) ** 2)
        s.x = y
        s.cached_value = float(value_y)
        s.cached_grad = grad_y
    else:
        sq_disp = 0.0
    s.step_index += 1
    return s, StepRecord(
        proposal=y, log_ratio=log_ratio, accepted=accepted,
        sq_displacement_coord1=sq_disp,
    )


def ula_step(p: Potential, params: KernelParams, s: ChainState):
    """Advance one unadjusted Langevin step (proposal always accepted)."""
    if params.variant != ULA:
        raise ValueError(f"ula_step needs variant='ula', got {params.variant!r}")
    h = params.h
    y = s.x - h * s.cached_grad + math.sqrt(2.0 * h) * s.rng.standard_normal(s.x.shape)
    value_y, grad_y = p.value_and_grad(y)
    log_ratio = float(
        _log_ratio_parts(h, s.x, s.cached_value, s.cached_grad, y, value_y, grad_y)
    )
    sq_disp = float((s.x[0] - y[0]) ** 2)
    s.x = y
    s.cached_value = float(value_y)
    s.cached_grad = grad_y
    s.step_index += 1
    return s, StepRecord(
        proposal=y, log_ratio=log_ratio, accepted=True,
        sq_displacement_coord1=sq_disp,
    )


def ou_exact_step(h: float, x, rng) -> np.ndarray:
    """Exact time-h Ornstein-Uhlenbeck transition for the Gaussian target.

    y ~ N(e^{−h}·x, (1 − e^{−2h})·I). This is the continuous Langevin kernel
    of the standard Gaussian and satisfies the semigroup property exactly.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    x = np.asarray(x, dtype=float)
    decay = math.exp(-h)
    sigma = math.sqrt(-math.expm1(-2.0 * h))
    return decay * x + sigma * rng.standard_normal(x.shape)


def diffusion_reference_step(
    p: Potential, h: float, x, substeps: int, rng
) -> np.ndarray:
    """Endpoint of an Euler path with ``substeps`` inner steps of size h/substeps.

    Approximates the time-h law of dX = −∇V(X) dt + sqrt(2) dB started at x;
    substeps=1 coincides with the MALA proposal. Accepts batches (..., d).
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    x = np.asarray(x, dtype=float).copy()
    dt = h / substeps
    noise = math.sqrt(2.0 * dt)
    for _ in range(substeps):
        x = x - dt * p.grad(x) + noise * rng.standard_normal(x.shape)
    return x


@dataclass(frozen=True)
class ChainSummary:
    """Trajectory summary returned by :func:`run_chain`."""

    final_x: np.ndarray
    n_steps: int
    n_accepted: int
    acceptance_rate: float | None
    mean_sq_displacement_coord1: float | None
    trajectory: np.ndarray | None = field(default=None, repr=False)


def run_chain(
    p: Potential,
    params: KernelParams,
    x0,
    n_steps: int,
    seed,
    thin: int = 0,
) -> ChainSummary:
    """Drive a single chain for ``n_steps`` transitions.

    ``thin`` > 0 records the state every ``thin`` steps (including step 0)
    into ``trajectory``. OU-exact and diffusion-reference variants count
    every step as accepted.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    state = init_chain(p, x0, seed)
    snapshots = [state.x.copy()] if thin > 0 else None
    if n_steps == 0:
        return ChainSummary(
            final_x=state.x, n_steps=0, n_accepted=0,
            acceptance_rate=None, mean_sq_displacement_coord1=None,
            trajectory=np.array(snapshots) if snapshots is not None else None,
        )
    n_accepted = 0
    sq_disp_total = 0.0
    for step in range(1, n_steps + 1):
        if params.variant == MALA:
            state, rec = mala_step(p, params, state)
            n_accepted += rec.accepted
            sq_disp_total += rec.sq_displacement_coord1
        elif params.variant == ULA:
            state, rec = ula_step(p, params, state)
            n_accepted += 1
            sq_disp_total += rec.sq_displacement_coord1
        else:
            old0 = state.x[0]
            if params.variant == OU_EXACT:
                y = ou_exact_step(params.h, state.x, state.rng)
            else:
                y = diffusion_reference_step(
                    p, params.h, state.x, params.substeps, state.rng
                )
            sq_disp_total += float((old0 - y[0]) ** 2)
            n_accepted += 1
            value, grad = p.value_and_grad(y)
            state.x, state.cached_value, state.cached_grad = y, float(value), grad
            state.step_index += 1
        if thin > 0 and step % thin == 0:
            snapshots.append(state.x.copy())
    return ChainSummary(
        final_x=state.x,
        n_steps=n_steps,
        n_accepted=n_accepted,
        acceptance_rate=n_accepted / n_steps,
        mean_sq_displacement_coord1=sq_disp_total / n_steps,
        trajectory=np.array(snapshots) if snapshots is not None else None,
    )


def batch_mala_update(p: Potential, h: float, X, rng):
    """One independent MALA transition for every row of X.

    Returns (X_new, accepted_mask, log_ratios); rejected rows keep their
    original values bitwise. Rows are independent chains, so this is the
    vectorized form of many single steps.
    """
    X = np.asarray(X, dtype=float)
    value_x, grad_x = p.value_and_grad(X)
    Y = X - h * grad_x + math.sqrt(2.0 * h) * rng.standard_normal(X.shape)
    value_y, grad_y = p.value_and_grad(Y)
    log_ratios = _log_ratio_parts(h, X, value_x, grad_x, Y, value_y, grad_y)
    accepted = np.log(_uniform_open(rng, len(X))) <= log_ratios
    X_new = np.where(accepted[:, None], Y, X)
    return X_new, accepted, log_ratios


def batch_ula_update(p: Potential, h: float, X, rng):
    """One unadjusted Langevin step for every row of X."""
    X = np.asarray(X, dtype=float)
    return X - h * p.grad(X) + math.sqrt(2.0 * h) * rng.standard_normal(X.shape)


_TABLE_CACHE: dict[tuple, oracle1d.CDFTable] = {}


def cdf_table_for(p: Potential, n_grid: int = 8193) -> oracle1d.CDFTable:
    """Inverse-CDF table of the target's 1-D marginal (cached for built-ins)."""
    key = p.cache_key()
    if key is not None:
        cached = _TABLE_CACHE.get((key, n_grid))
        if cached is not None:
            return cached
    table = oracle1d.inverse_cdf_table(oracle1d.profile_for(p), n_grid=n_grid)
    if key is not None:
        _TABLE_CACHE[(key, n_grid)] = table
    return table


def sample_separable_target(p: Potential, n: int, seed, n_grid: int = 8193) -> np.ndarray:
    """n i.i.d. exact draws from a separable target, one row per sample.

    Coordinates are sampled independently through the 1-D inverse-CDF table,
    so rows are exact up to the table tolerance (<= 1e-8 in CDF).
    """
    if not p.separable:
        raise UnsupportedTargetError("exact sampling requires a separable target")
    if n < 1:
        raise ValueError("n must be >= 1")
    table = cdf_table_for(p, n_grid=n_grid)
    rng = substream(seed, "separable-sampling")
    u = rng.random((n, p.d))
    return np.asarray(table.inverse(u.ravel()), dtype=float).reshape(n, p.d)
