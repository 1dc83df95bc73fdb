"""Stable evaluation of the pattern-function kernels f_{n,m}(x).

The kernels are assembled from two families of solutions of the harmonic
oscillator three-term recurrence: a regular (normalizable) family u_n and
an irregular family v_m.  Both are carried with a range-control constant
beta so that the overflow-prone envelopes e^{+x^2} and e^{-x^2} never
appear alone; every product that enters f_{n,m} is beta-free.

Conventions: the quadrature is X_phi = (a^dag e^{i phi} + a e^{-i phi})/2,
so the vacuum quadrature variance is 1/4 and the ground-state wavefunction
is psi_0(x) = (2/pi)^{1/4} e^{-x^2}.  With u_0 = beta the scaled regular
solutions obey u_n = beta e^{x^2} psi_n(x) / ((2/pi)^{1/4} e^{-x^2}) up to
exact cancellation of the Gaussian factors, which is what makes the
recursion usable far into the classically forbidden region.

The irregular family is started at index 4M from a semiclassical seed and
recursed downward inside the oscillatory (safe) region; outside it, a
forward recursion from the combined-scaling value v_0 = 1/(beta x) is
stable instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, PatternOverflowError

_DTYPES = {"single": np.float32, "double": np.float64}


@dataclass(frozen=True)
class PatternConfig:
    """Parameters shared by all pattern evaluations.

    cutoff is the density-matrix dimension M, beta the range-control
    constant, precision one of {"single", "double"}.  forward_floor guards
    the forward-branch seed 1/(beta x) against tiny |x|; binned estimators
    set it to 1e-3 of the bin width.
    """

    cutoff: int
    beta: float
    precision: str = "double"
    forward_floor: float = 0.0

    def __post_init__(self):
        if self.cutoff < 1:
            raise ValueError(f"cutoff must be >= 1, got {self.cutoff}")
        if not (self.beta > 0.0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be positive and finite, got {self.beta}")
        if self.precision not in _DTYPES:
            raise ValueError(f"precision must be 'single' or 'double', got {self.precision!r}")
        if self.forward_floor < 0.0:
            raise ValueError("forward_floor must be >= 0")

    @property
    def dtype(self):
        return _DTYPES[self.precision]


@dataclass(frozen=True)
class SemiclassicalSeed:
    """Seed data for the irregular recursion at one index m."""

    m: int
    alpha_m: float
    tau_m: float
    chi_m: float
    kappa_m: float


@dataclass
class PatternWorkspace:
    """The beta-scaled vector bundle (u, u~, v, v~) at one quadrature value."""

    x: float
    u: np.ndarray
    u_tilde: np.ndarray
    v: np.ndarray
    v_tilde: np.ndarray
    region: str
    cutoff: int
    beta: float


@dataclass
class PatternTable:
    """Workspace vectors for a whole grid of quadrature values at once.

    Arrays have shape (M+2, len(x)); backward[i] tells which recursion
    produced column i.
    """

    x: np.ndarray
    u: np.ndarray
    u_tilde: np.ndarray
    v: np.ndarray
    v_tilde: np.ndarray
    backward: np.ndarray
    cutoff: int
    beta: float


def choose_beta(x_values) -> float:
    """Default range-control heuristic beta = exp(-3 max|x|) over the data."""
    x = np.asarray(x_values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("choose_beta needs at least one quadrature value")
    return float(np.exp(-3.0 * np.max(np.abs(x))))


def balanced_beta(x_values) -> float:
    """Alternative beta = exp(-max|x|^2 / 2) splitting the dynamic range
    evenly between u and v; extends the usable cutoff for very large M."""
    x = np.asarray(x_values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("balanced_beta needs at least one quadrature value")
    return float(np.exp(-0.5 * np.max(np.abs(x)) ** 2))


def safe_region_bound(M: int) -> float:
    """Largest |x| (exclusive) where the backward recursion is stable."""
    alpha = math.sqrt(4.0 * M + 0.5)
    return alpha - 0.5 * alpha ** (-1.0 / 3.0)


def in_safe_region(x: float, M: int) -> bool:
    """True iff |x| < alpha_{4M} - (1/2) alpha_{4M}^{-1/3}."""
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    return abs(x) < safe_region_bound(M)


def semiclassical_kappa(m: int, x, refine: bool = True):
    """Large-m seed value kappa_m(x) for the irregular solution.

    The leading form is (8 pi)^{1/4} / sqrt(alpha_m sin tau_m)
    * sin(alpha_m^2 chi_m / 2 + pi/4) with tau_m = arccos(x/alpha_m) and
    chi_m = sin(2 tau_m) - 2 tau_m.  With refine=True (the default, and
    what the irregular recursion uses) the next two asymptotic orders are
    included: a phase term of order alpha^-2 and an amplitude factor of
    order alpha^-4, both polynomials in cot(tau_m).  Without them the
    downward recursion inherits an O(1/m) seed error that the product
    integrals of pattern_row can resolve at M >= 16.

    Accepts a scalar or an ndarray x; requires |x| < alpha_m.
    """
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    alpha = math.sqrt(m + 0.5)
    xa = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(xa) >= alpha):
        raise ValueError(
            f"semiclassical_kappa requires |x| < alpha_m = {alpha:.6g} (arccos domain)"
        )
    ratio = xa / alpha
    tau = np.arccos(ratio)
    sin_tau = np.sqrt(1.0 - ratio * ratio)
    chi = 2.0 * ratio * sin_tau - 2.0 * tau
    arg = 0.5 * alpha * alpha * chi + 0.25 * np.pi
    amp = (8.0 * np.pi) ** 0.25 / np.sqrt(alpha * sin_tau)
    if refine:
        cot = ratio / sin_tau
        cot2 = cot * cot
        arg = arg + (5.0 / 48.0 * cot2 + 0.125) * cot / (alpha * alpha)
        amp = amp * (
            1.0
            - (1.0 / 32.0 + cot2 * (9.0 / 64.0 + cot2 * (3.0 / 16.0 + cot2 * (5.0 / 64.0))))
            / (alpha * alpha) ** 2
        )
    out = amp * np.sin(arg)
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(out)
    return out


def semiclassical_seed(m: int, x: float, refine: bool = True) -> SemiclassicalSeed:
    """Bundle the seed value with its intermediate quantities for inspection."""
    alpha = math.sqrt(m + 0.5)
    kappa = semiclassical_kappa(m, x, refine=refine)
    tau = math.acos(x / alpha)
    chi = math.sin(2.0 * tau) - 2.0 * tau
    return SemiclassicalSeed(m=m, alpha_m=alpha, tau_m=tau, chi_m=chi, kappa_m=float(kappa))


def _as_grid(x):
    """Return (x as 1-D float64 array, was_scalar flag)."""
    scalar = np.isscalar(x) or np.ndim(x) == 0
    xa = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if xa.ndim != 1:
        raise ValueError("x must be a scalar or a 1-D array")
    if not np.all(np.isfinite(xa)):
        raise ValueError("x must be finite")
    return xa, scalar


def regular_sequence(x, cfg: PatternConfig):
    """Regular solutions u_0..u_{M+1} and u~_n = sqrt(n) u_n at x.

    u_0 = beta, u_1 = 2 x beta, and for n >= 2
    u~_n = 2 x u_{n-1} - sqrt(n-1) u_{n-2},  u_n = u~_n / sqrt(n).
    Vectorized over x: returns shape (M+2,) for scalar input and
    (M+2, len(x)) for array input.
    """
    xa, scalar = _as_grid(x)
    dtype = cfg.dtype
    L = cfg.cutoff + 2
    beta = cfg.beta
    if dtype(beta) == 0.0:
        raise NumericalError(
            f"beta = {beta:.3e} underflows {cfg.precision} precision; use a larger beta"
        )
    u = np.zeros((L, xa.size), dtype=dtype)
    ut = np.zeros_like(u)
    xd = xa.astype(dtype)
    u[0] = dtype(beta)
    # overflow is detected on the result, not left to runtime warnings
    with np.errstate(over="ignore", invalid="ignore"):
        if L > 1:
            u[1] = 2.0 * xd * dtype(beta)
            ut[1] = u[1]
        for n in range(2, L):
            ut[n] = 2.0 * xd * u[n - 1] - math.sqrt(n - 1) * u[n - 2]
            u[n] = ut[n] / math.sqrt(n)
    bad = ~np.isfinite(u)
    if bad.any():
        n_bad, i_bad = np.argwhere(bad)[0]
        raise PatternOverflowError(
            f"regular sequence overflowed at index n={n_bad} (x={xa[i_bad]:.6g}, "
            f"beta={beta:.3e}); try a smaller beta"
        )
    if scalar:
        return u[:, 0], ut[:, 0]
    return u, ut


def _backward_irregular(xa: np.ndarray, cfg: PatternConfig):
    """Downward recursion for v on columns known to lie in the safe region."""
    M = cfg.cutoff
    L = M + 2
    dtype = cfg.dtype
    K = 4 * M
    # Scale prefactor beta^{-1} e^{-x^2}: evaluated in log space first so a
    # silent underflow to zero (all-zero v, hence all-zero f) cannot occur.
    log_pref = -xa * xa - math.log(cfg.beta)
    tiny = np.log(float(np.finfo(dtype).tiny))
    if np.any(log_pref <= tiny):
        i = int(np.argmin(log_pref))
        raise NumericalError(
            f"irregular-sequence scaling beta^-1 e^(-x^2) underflows {cfg.precision} "
            f"precision at x={xa[i]:.6g}; use a smaller beta"
        )
    pref = np.exp(log_pref).astype(dtype)
    vp2 = pref * semiclassical_kappa(K, xa).astype(dtype)
    vp1 = pref * semiclassical_kappa(K - 1, xa).astype(dtype)
    v = np.zeros((L, xa.size), dtype=dtype)
    x2 = 2.0 * xa.astype(dtype)
    with np.errstate(over="ignore", invalid="ignore"):
        for m in range(K - 2, -1, -1):
            vm = (x2 * vp1 - math.sqrt(m + 2) * vp2) / math.sqrt(m + 1)
            vp2 = vp1
            vp1 = vm
            if m <= M + 1:
                v[m] = vm
    return v


def _forward_irregular(xa: np.ndarray, cfg: PatternConfig):
    """Forward recursion for v outside the safe region."""
    M = cfg.cutoff
    L = M + 2
    dtype = cfg.dtype
    floor = cfg.forward_floor
    if np.any(np.abs(xa) <= floor) or np.any(xa == 0.0):
        i = int(np.argmin(np.abs(xa)))
        raise NumericalError(
            f"forward irregular recursion is singular at x={xa[i]:.6g} "
            f"(|x| <= floor {floor:.3e}); v_0 = 1/(beta x) diverges"
        )
    v = np.zeros((L, xa.size), dtype=dtype)
    with np.errstate(over="ignore", invalid="ignore"):
        v[0] = (1.0 / (cfg.beta * xa)).astype(dtype)
        inv2x = (0.5 / xa).astype(dtype)
        for m in range(1, L):
            v[m] = math.sqrt(m) * inv2x * v[m - 1]
    return v


def _finish_irregular(v: np.ndarray, xa: np.ndarray, cfg: PatternConfig):
    bad = ~np.isfinite(v)
    if bad.any():
        m_bad, i_bad = np.argwhere(bad)[0]
        raise NumericalError(
            f"irregular sequence is not finite at index m={m_bad} "
            f"(x={xa[i_bad]:.6g}, beta={cfg.beta:.3e})"
        )
    scale = np.sqrt(np.arange(v.shape[0], dtype=np.float64)).astype(cfg.dtype)
    vt = scale[:, None] * v
    return vt


def irregular_sequence(x, cfg: PatternConfig):
    """Irregular solutions v_0..v_{M+1}, v~_m = sqrt(m) v_m, and the region used.

    Inside the safe region the recursion is seeded at index 4M from the
    semiclassical values and run downward; outside it the forward recursion
    from v_0 = 1/(beta x) is used.  Array input must lie in a single region
    (build_table handles mixed grids).
    """
    xa, scalar = _as_grid(x)
    safe = np.abs(xa) < safe_region_bound(cfg.cutoff)
    if safe.all():
        region = "backward"
        v = _backward_irregular(xa, cfg)
    elif not safe.any():
        region = "forward"
        v = _forward_irregular(xa, cfg)
    else:
        raise ValueError(
            "irregular_sequence received x values from both regions; "
            "use build_table for mixed grids"
        )
    vt = _finish_irregular(v, xa, cfg)
    if scalar:
        return v[:, 0], vt[:, 0], region
    return v, vt, region


def build_workspace(x: float, cfg: PatternConfig) -> PatternWorkspace:
    """Construct the full (u, u~, v, v~) bundle at one quadrature value."""
    u, ut = regular_sequence(x, cfg)
    v, vt, region = irregular_sequence(x, cfg)
    return PatternWorkspace(
        x=float(x), u=u, u_tilde=ut, v=v, v_tilde=vt,
        region=region, cutoff=cfg.cutoff, beta=cfg.beta,
    )


def build_table(x, cfg: PatternConfig) -> PatternTable:
    """Construct workspace vectors for a grid of quadrature values.

    Columns inside and outside the safe region are handled by the backward
    and forward recursions respectively.
    """
    xa, _ = _as_grid(x)
    u, ut = regular_sequence(xa, cfg)
    safe = np.abs(xa) < safe_region_bound(cfg.cutoff)
    v = np.zeros_like(u)
    if safe.any():
        v[:, safe] = _backward_irregular(xa[safe], cfg)
    if (~safe).any():
        v[:, ~safe] = _forward_irregular(xa[~safe], cfg)
    vt = _finish_irregular(v, xa, cfg)
    return PatternTable(
        x=xa, u=u, u_tilde=ut, v=v, v_tilde=vt,
        backward=safe, cutoff=cfg.cutoff, beta=cfg.beta,
    )


def pattern_row(ws: PatternWorkspace, d: int) -> np.ndarray:
    """Pattern-function values f_{n,n+d}(x) for n = 0..M-d-1.

    Uses the factorized form f_{n,m} = (2x u_n - u~_{n+1}) v_m - u_n v~_{m+1}
    in which the beta scalings of u and v cancel exactly.
    """
    M = ws.cutoff
    if not 0 <= d <= M - 1:
        raise ValueError(f"diagonal d must be in 0..{M - 1}, got {d}")
    u, ut, v, vt = ws.u, ws.u_tilde, ws.v, ws.v_tilde
    k = M - d
    with np.errstate(over="ignore", invalid="ignore"):
        row = (2.0 * ws.x * u[:k] - ut[1:k + 1]) * v[d:M] - u[:k] * vt[d + 1:M + 1]
    if not np.all(np.isfinite(row)):
        raise NumericalError(f"pattern row d={d} is not finite at x={ws.x:.6g}")
    return row


def pattern_row_grid(table: PatternTable, d: int) -> np.ndarray:
    """Like pattern_row but over the whole grid: shape (M-d, len(x))."""
    M = table.cutoff
    if not 0 <= d <= M - 1:
        raise ValueError(f"diagonal d must be in 0..{M - 1}, got {d}")
    u, ut, v, vt = table.u, table.u_tilde, table.v, table.v_tilde
    k = M - d
    x = table.x.astype(u.dtype)
    with np.errstate(over="ignore", invalid="ignore"):
        return (2.0 * x * u[:k] - ut[1:k + 1]) * v[d:M] - u[:k] * vt[d + 1:M + 1]


def pattern_value(ws: PatternWorkspace, n: int, m: int) -> float:
    """Single kernel value f_{n,m}(x); f_{m,n} is served by symmetry."""
    M = ws.cutoff
    if not (0 <= n <= M - 1 and 0 <= m <= M - 1):
        raise ValueError(f"indices must be in 0..{M - 1}, got ({n}, {m})")
    if n > m:
        n, m = m, n
    u, ut, v, vt = ws.u, ws.u_tilde, ws.v, ws.v_tilde
    val = (2.0 * ws.x * u[n] - ut[n + 1]) * v[m] - u[n] * vt[m + 1]
    if not math.isfinite(val):
        raise NumericalError(f"pattern value ({n},{m}) is not finite at x={ws.x:.6g}")
    return float(val)
