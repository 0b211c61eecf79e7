"""Exact brute-force testbed on finite state spaces.

Everything the continuous setting can only check statistically is verified
here with exact linear algebra: metropolization and its detailed balance,
the off-diagonal L1 metric in which the adjustment is a projection, the
eigenvalue spectral gap, exhaustively enumerated conductance and
s-conductance, warmness propagation, the chi-squared-vs-TV warmness
inequality, and the conductance-based mixing bound

    ||mu_n − pi||_TV <= M0·s + M0·exp(−C_s²·n/2).

State counts are capped at 20 (subset enumeration is exponential); the
random instance families used by the tests stay at n <= 10.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

EXACT_TOL = 1e-12

MAX_STATES = 20


@dataclass(frozen=True)
class FiniteChain:
    """Stationary vector pi, proposal Q, and metropolized kernel T."""

    pi: np.ndarray
    Q: np.ndarray
    T: np.ndarray

    @property
    def n(self) -> int:
        return len(self.pi)


def _check_distribution(pi: np.ndarray, what: str, tol: float = 1e-9):
    if pi.ndim != 1 or np.any(pi < 0) or abs(pi.sum() - 1.0) > tol:
        raise ValueError(f"{what} must be a probability vector")


def _check_row_stochastic(M: np.ndarray, what: str, tol: float = 1e-9):
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{what} must be a square matrix")
    if np.any(M < -tol) or np.max(np.abs(M.sum(axis=1) - 1.0)) > tol:
        raise ValueError(f"{what} must be row-stochastic")


def metropolize(Q, pi) -> FiniteChain:
    """Metropolis adjustment of proposal Q toward stationary vector pi.

    Off-diagonal entries are T[i, j] = min(pi_i·Q[i, j], pi_j·Q[j, i]) / pi_i
    (the min(1, ratio) rule written symmetrically so detailed balance holds
    to rounding); the diagonal absorbs the rejected mass. Zero proposal mass
    stays zero even when the reverse mass is positive.
    """
    Q = np.asarray(Q, dtype=float)
    pi = np.asarray(pi, dtype=float)
    _check_row_stochastic(Q, "Q")
    if np.any(pi <= 0):
        raise ValueError("pi must be entrywise positive")
    _check_distribution(pi, "pi")
    flow = np.minimum(pi[:, None] * Q, (pi[:, None] * Q).T)
    T = flow / pi[:, None]
    np.fill_diagonal(T, 0.0)
    np.fill_diagonal(T, np.maximum(0.0, 1.0 - T.sum(axis=1)))
    chain = FiniteChain(pi=pi, Q=Q, T=T)
    assert_chain_invariants(chain)
    return chain


def assert_chain_invariants(c: FiniteChain, tol: float = EXACT_TOL):
    """Raise unless rows sum to 1, detailed balance, and stationarity hold."""
    row_err = float(np.max(np.abs(c.T.sum(axis=1) - 1.0)))
    db_err = detailed_balance_error(c.T, c.pi)
    stat_err = float(np.max(np.abs(c.pi @ c.T - c.pi)))
    if max(row_err, db_err, stat_err) > tol:
        raise ValueError(
            f"chain invariants violated: rows {row_err:.2e}, "
            f"detailed balance {db_err:.2e}, stationarity {stat_err:.2e}"
        )


def detailed_balance_error(T, pi) -> float:
    """max_ij |pi_i·T[i, j] − pi_j·T[j, i]|."""
    F = np.asarray(pi, dtype=float)[:, None] * np.asarray(T, dtype=float)
    return float(np.max(np.abs(F - F.T)))


def offdiag_l1(A, B, pi) -> float:
    """Σ_i pi_i · Σ_{j != i} |A[i, j] − B[i, j]|, the projection metric."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise ValueError("matrices must have matching shapes")
    D = np.abs(A - B)
    np.fill_diagonal(D, 0.0)
    return float(np.asarray(pi, dtype=float) @ D.sum(axis=1))


@dataclass(frozen=True)
class SpectralQuantities:
    """Eigen spectral gap plus enumerated conductance profile."""

    gap: float
    conductance: float
    s_conductance: Callable[[float], float]
    subset_masses: np.ndarray
    subset_flows: np.ndarray


def spectral_quantities(c: FiniteChain) -> SpectralQuantities:
    """Exact gap (1 − second-largest eigenvalue) and enumerated conductance.

    The gap comes from the pi-symmetrized kernel's eigenvalues; conductance
    and s-conductance enumerate all 2^n − 2 proper subsets, so n is capped
    at 20.
    """
    n = c.n
    if n > MAX_STATES:
        raise ValueError(f"subset enumeration supports at most {MAX_STATES} states")
    root = np.sqrt(c.pi)
    sym = root[:, None] * c.T / root[None, :]
    sym = 0.5 * (sym + sym.T)
    eigenvalues = np.linalg.eigvalsh(sym)
    gap = float(min(max(1.0 - eigenvalues[-2], 0.0), 2.0))

    F = c.pi[:, None] * c.T
    n_subsets = (1 << n) - 2
    masses = np.empty(n_subsets)
    flows = np.empty(n_subsets)
    idx = np.arange(n)
    for mask in range(1, (1 << n) - 1):
        members = (mask >> idx) & 1 == 1
        masses[mask - 1] = c.pi[members].sum()
        flows[mask - 1] = F[np.ix_(members, ~members)].sum()

    small = masses <= 0.5
    conductance = float(np.min(flows[small] / masses[small])) if small.any() else 1.0

    def s_conductance(s: float) -> float:
        if not 0.0 <= s < 0.5:
            raise ValueError("s must lie in [0, 1/2)")
        eligible = (masses > s) & small
        if not eligible.any():
            return math.inf
        return float(np.min(flows[eligible] / (masses[eligible] - s)))

    return SpectralQuantities(
        gap=gap,
        conductance=conductance,
        s_conductance=s_conductance,
        subset_masses=masses,
        subset_flows=flows,
    )


@dataclass(frozen=True)
class FiniteProjectionReport:
    """Global and per-state projection inequalities for one (pi, Q, Qbar)."""

    global_lhs: float
    global_rhs: float
    state_lhs: np.ndarray
    state_rhs: np.ndarray
    global_ok: bool
    states_ok: bool

    @property
    def passed(self) -> bool:
        return self.global_ok and self.states_ok


def projection_check(Q, Qbar, pi, atol: float = EXACT_TOL) -> FiniteProjectionReport:
    """Verify the adjustment is a projection relative to any reversible Qbar.

    With T = metropolize(Q, pi) and Qbar reversible w.r.t. pi (checked to
    1e-10), asserts

    (i)  offdiag_l1(T, Q, pi) <= 2 · offdiag_l1(Qbar, Q, pi);
    (ii) per state i:
         Σ_{j != i} |T − Q|[i, j] <= 2 Σ_{j != i} |Qbar − Q|[i, j]
             + Σ_{j: Qbar[j, i] > 0} (pi_j·Qbar[j, i]/pi_i) · |Q[j, i]/Qbar[j, i] − 1|.
    """
    Q = np.asarray(Q, dtype=float)
    Qbar = np.asarray(Qbar, dtype=float)
    pi = np.asarray(pi, dtype=float)
    _check_row_stochastic(Qbar, "Qbar")
    if detailed_balance_error(Qbar, pi) > 1e-10:
        raise ValueError("Qbar is not reversible with respect to pi")
    T = metropolize(Q, pi).T

    global_lhs = offdiag_l1(T, Q, pi)
    global_rhs = 2.0 * offdiag_l1(Qbar, Q, pi)

    DTQ = np.abs(T - Q)
    np.fill_diagonal(DTQ, 0.0)
    DBQ = np.abs(Qbar - Q)
    np.fill_diagonal(DBQ, 0.0)
    state_lhs = DTQ.sum(axis=1)
    reverse_mass = (pi[:, None] * Qbar).T / pi[:, None]  # [i, j] = pi_j Qbar[j,i]/pi_i
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(np.where(Qbar.T > 0, Q.T / np.where(Qbar.T > 0, Qbar.T, 1.0), 0.0) - 1.0)
    rel = np.where(Qbar.T > 0, rel, 0.0)
    state_rhs = 2.0 * DBQ.sum(axis=1) + (reverse_mass * rel).sum(axis=1)

    return FiniteProjectionReport(
        global_lhs=global_lhs,
        global_rhs=global_rhs,
        state_lhs=state_lhs,
        state_rhs=state_rhs,
        global_ok=bool(global_lhs <= global_rhs + atol),
        states_ok=bool(np.all(state_lhs <= state_rhs + atol)),
    )


DEFAULT_S_GRID = (0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.49)


@dataclass(frozen=True)
class EvolveReport:
    """Exact checks along an evolved distribution mu_n = mu_0 T^n."""

    n_steps: int
    warmness_start: float
    warm_monotone_ok: bool
    chi2_ok: bool
    lovasz_ok: bool
    max_warm_violation: float
    max_chi2_violation: float
    max_lovasz_violation: float

    @property
    def passed(self) -> bool:
        return self.warm_monotone_ok and self.chi2_ok and self.lovasz_ok


def evolve_and_check(
    c: FiniteChain,
    mu0,
    n_steps: int,
    s_grid=DEFAULT_S_GRID,
    atol: float = EXACT_TOL,
) -> EvolveReport:
    """Iterate mu_{n+1} = mu_n T and verify warmness, chi², and mixing bounds.

    Checks, for every n <= n_steps: max(mu_n/pi) is non-increasing;
    chi²(mu_n || pi) <= 2·M0·TV(mu_n, pi); and the s-conductance mixing
    bound TV(mu_n, pi) <= M0·s + M0·exp(−C_s²·n/2) over the s grid.
    """
    mu = np.asarray(mu0, dtype=float)
    _check_distribution(mu, "mu0")
    m0 = float(np.max(mu / c.pi))
    spec = spectral_quantities(c)
    cs = {s: spec.s_conductance(s) for s in s_grid}

    warm_prev = m0
    max_warm = 0.0
    max_chi2 = 0.0
    max_lovasz = 0.0
    for n in range(1, n_steps + 1):
        mu = mu @ c.T
        warm = float(np.max(mu / c.pi))
        max_warm = max(max_warm, warm - warm_prev)
        warm_prev = warm
        tv = 0.5 * float(np.abs(mu - c.pi).sum())
        chi2 = float(np.sum((mu - c.pi) ** 2 / c.pi))
        max_chi2 = max(max_chi2, chi2 - 2.0 * m0 * tv)
        for s, c_s in cs.items():
            bound = m0 * s + (m0 * math.exp(-0.5 * c_s * c_s * n) if math.isfinite(c_s) else 0.0)
            max_lovasz = max(max_lovasz, tv - bound)
    return EvolveReport(
        n_steps=n_steps,
        warmness_start=m0,
        warm_monotone_ok=max_warm <= atol,
        chi2_ok=max_chi2 <= atol,
        lovasz_ok=max_lovasz <= atol,
        max_warm_violation=max_warm,
        max_chi2_violation=max_chi2,
        max_lovasz_violation=max_lovasz,
    )


def random_reversible_chain(n: int, rng) -> FiniteChain:
    """Random instance: pi ~ Dirichlet(1, ..., 1), Q row-normalized uniforms."""
    pi = rng.dirichlet(np.ones(n))
    Q = rng.uniform(0.1, 1.0, size=(n, n))
    Q /= Q.sum(axis=1, keepdims=True)
    return metropolize(Q, pi)


def random_projection_triple(n: int, rng):
    """(pi, Q, Qbar) with Qbar reversible by metropolizing a second proposal."""
    chain = random_reversible_chain(n, rng)
    other = rng.uniform(0.1, 1.0, size=(n, n))
    other /= other.sum(axis=1, keepdims=True)
    qbar = metropolize(other, chain.pi).T
    return chain.pi, chain.Q, qbar
