"""Distribution of the local-average SIR in an interference-limited Poisson
downlink, plus its sectorized generalization.

The CDF comes in two piecewise families sharing the exponential lower tail
``exp(s*/theta)``:

* ``four``: exact branches down to theta = 1/2, then a constant segment at
  level ``A_delta``, then the tail (the accurate family, used for CDF plots
  and coverage);
* ``three``: exact branch only for theta >= 1, constant segment at
  ``1 - sinc(delta)``, tail stretched up to the segment (the family whose
  density has closed-form pieces, used for spatial averaging).

``s*`` is the unique negative root of ``sum_k (-s)^k / (k! (k - delta)) = 0``
and depends on the path-loss exponent only through ``delta = 2/eta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .special import gamma_star_series, hyp2f1_nonpos, sinc_norm

__all__ = [
    "FOUR_BRANCH", "THREE_BRANCH", "PathModel", "SectorModel",
    "solve_s_star", "b_delta", "b_delta_prime",
    "sir_cdf", "sir_pdf", "sir_quantile", "sector_sir_cdf", "shifted_sir_cdf",
    "sector_argument", "sector_argument_inv",
]

FOUR_BRANCH = "four"
THREE_BRANCH = "three"


def solve_s_star(delta: float) -> float:
    """Unique negative root of the lower-tail constant condition.

    The series ``g(s) = sum_k (-s)^k / (k! (k - delta))`` is strictly
    increasing in ``-s`` (the k = 0 term is ``-1/delta`` and every other term
    is positive and increasing), so bracketing on [-5, -1e-6] cannot fail.
    Bisection with a secant step each iteration; terminates with residual
    below 1e-10.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")

    def g(s):
        return gamma_star_series(-delta, s)

    lo, hi = -5.0, -1e-6  # g(lo) > 0 > g(hi)
    glo, ghi = g(lo), g(hi)
    if not (glo > 0.0 > ghi):
        raise RuntimeError("root bracket failure for s*")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        # secant candidate, kept only if it stays inside the bracket
        sec = hi - ghi * (hi - lo) / (ghi - glo)
        if lo < sec < hi:
            mid = sec
        gm = g(mid)
        if abs(gm) <= 1e-12 or hi - lo < 1e-14:
            return mid
        if gm > 0.0:
            lo, glo = mid, gm
        else:
            hi, ghi = mid, gm
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class SectorModel:
    """Per-BS sectorization: S sector antennas with front-to-back ratio Q.

    ``front_to_back`` is linear; use :meth:`from_db` at external interfaces.
    The in/out gains preserve the total radiated power: G + (S-1) g = S.
    """

    sectors: int = 1
    front_to_back: float = 1.0

    def __post_init__(self):
        if self.sectors < 1:
            raise ValueError("sectors must be >= 1")
        if self.front_to_back < 1.0:
            raise ValueError("front-to-back ratio must be >= 1 (linear)")

    @classmethod
    def from_db(cls, sectors: int, q_db: float) -> "SectorModel":
        return cls(sectors, 10.0 ** (q_db / 10.0))

    @property
    def gain_in(self) -> float:
        q, s = self.front_to_back, self.sectors
        return q * s / (q + s - 1.0)

    @property
    def gain_out(self) -> float:
        q, s = self.front_to_back, self.sectors
        return s / (q + s - 1.0)

    @property
    def sir_cap(self) -> float:
        """Hard ceiling Q/(S-1) on the sector SIR (inf when unsectorized)."""
        if self.sectors == 1:
            return math.inf
        return self.front_to_back / (self.sectors - 1.0)


OMNI = SectorModel()


@dataclass(frozen=True)
class PathModel:
    """Path-loss exponent plus every derived constant the CDF branches need."""

    eta: float
    mode: str = FOUR_BRANCH
    delta: float = field(init=False)
    s_star: float = field(init=False)
    sinc_delta: float = field(init=False)
    a_delta: float = field(init=False)
    theta_const: float = field(init=False)  # left edge of the constant segment

    def __post_init__(self):
        if not self.eta > 2.0:
            raise ValueError("path-loss exponent must exceed 2")
        if self.mode not in (FOUR_BRANCH, THREE_BRANCH):
            raise ValueError(f"unknown branch mode {self.mode!r}")
        delta = 2.0 / self.eta
        s_star = solve_s_star(delta)
        sd = sinc_norm(delta)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "s_star", s_star)
        object.__setattr__(self, "sinc_delta", sd)
        if self.mode == FOUR_BRANCH:
            a = 1.0 - 2.0 ** delta * sd + b_delta_of(delta, sd, 1.0)
        else:
            a = 1.0 - sd
        if not 0.0 < a < 1.0:
            raise ValueError(f"constant segment level {a} outside (0, 1)")
        theta_const = s_star / math.log(a)
        object.__setattr__(self, "a_delta", a)
        object.__setattr__(self, "theta_const", theta_const)
        # lower tail and constant segment must agree at the join
        assert abs(math.exp(s_star / theta_const) - a) <= 1e-12
        limit = 0.5 if self.mode == FOUR_BRANCH else 1.0
        if not theta_const < limit:
            raise ValueError(f"branch join {theta_const} crosses {limit}")

    def with_mode(self, mode: str) -> "PathModel":
        return self if mode == self.mode else replace(self, mode=mode)

    @property
    def breakpoints(self) -> tuple:
        if self.mode == FOUR_BRANCH:
            return (self.theta_const, 0.5, 1.0)
        return (self.theta_const, 1.0)


def _b_prefactor(delta: float, sd: float) -> float:
    return (delta * sd * sd * math.gamma(delta + 1.0) ** 2
            / math.gamma(2.0 * delta + 2.0))


def b_delta_of(delta: float, sd: float, x) -> float:
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("b_delta requires x > 0")
    f = hyp2f1_nonpos(1.0, delta + 1.0, 2.0 * delta + 2.0, -1.0 / x)
    out = _b_prefactor(delta, sd) * f / x ** (1.0 + 2.0 * delta)
    return float(out) if out.ndim == 0 else out


def b_delta(model: PathModel, x):
    """Hypergeometric correction term of the exact CDF branch on [1/2, 1)."""
    return b_delta_of(model.delta, model.sinc_delta, x)


def b_delta_prime(model: PathModel, x):
    """d/dx of ``b_delta`` (used by the four-branch density)."""
    d = model.delta
    x = np.asarray(x, dtype=float)
    z = -1.0 / x
    f1 = hyp2f1_nonpos(1.0, d + 1.0, 2.0 * d + 2.0, z)
    # dF/dz with the contiguous-parameter derivative, a*b/c * 2F1(a+1,b+1;c+1)
    f2 = hyp2f1_nonpos(2.0, d + 2.0, 2.0 * d + 3.0, z) * (d + 1.0) / (2.0 * d + 2.0)
    k = _b_prefactor(d, model.sinc_delta)
    out = k * x ** (-2.0 - 2.0 * d) * (-(1.0 + 2.0 * d) * f1 + f2 / x)
    return float(out) if out.ndim == 0 else out


def _tail_cdf(model: PathModel, theta):
    return 1.0 - theta ** (-model.delta) * model.sinc_delta


def sir_cdf(model: PathModel, theta):
    """CDF of the local-average SIR, evaluated branch-wise (vectorized)."""
    theta = np.asarray(theta, dtype=float)
    scalar = theta.ndim == 0
    theta = np.atleast_1d(theta)
    if np.any(theta < 0):
        raise ValueError("theta must be nonnegative")
    out = np.empty_like(theta)
    t1 = model.theta_const
    low = theta < t1
    with np.errstate(divide="ignore"):
        out[low] = np.where(theta[low] == 0.0, 0.0,
                            np.exp(model.s_star / np.maximum(theta[low], 1e-300)))
    if model.mode == FOUR_BRANCH:
        seg = (theta >= t1) & (theta < 0.5)
        mid = (theta >= 0.5) & (theta < 1.0)
        tail = theta >= 1.0
        out[seg] = model.a_delta
        if mid.any():
            tm = theta[mid]
            out[mid] = _tail_cdf(model, tm) + b_delta(model, tm / (1.0 - tm))
        out[tail] = _tail_cdf(model, theta[tail])
    else:
        seg = (theta >= t1) & (theta < 1.0)
        tail = theta >= 1.0
        out[seg] = model.a_delta
        out[tail] = _tail_cdf(model, theta[tail])
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if scalar else out


def sir_pdf(model: PathModel, theta, with_flag: bool = False):
    """Density of the SIR CDF (piecewise derivative; zero on the constant
    segment).  Exactly at a breakpoint the right-limit value is returned;
    with ``with_flag`` the return is ``(value, hit_breakpoint)``.
    """
    theta = np.asarray(theta, dtype=float)
    scalar = theta.ndim == 0
    theta = np.atleast_1d(theta)
    if np.any(theta <= 0):
        raise ValueError("theta must be positive")
    hit = np.zeros(theta.shape, dtype=bool)
    for b in model.breakpoints:
        hit |= theta == b
    out = np.zeros_like(theta)
    t1 = model.theta_const
    d, sd, ss = model.delta, model.sinc_delta, model.s_star
    low = theta < t1
    out[low] = -ss * np.exp(ss / theta[low]) / theta[low] ** 2
    tail_from = 1.0
    tail = theta >= tail_from
    out[tail] = d * sd * theta[tail] ** (-d - 1.0)
    if model.mode == FOUR_BRANCH:
        mid = (theta >= 0.5) & (theta < 1.0)
        if mid.any():
            tm = theta[mid]
            out[mid] = (d * sd * tm ** (-d - 1.0)
                        + b_delta_prime(model, tm / (1.0 - tm)) / (1.0 - tm) ** 2)
    if scalar:
        value = float(out[0])
        return (value, bool(hit[0])) if with_flag else value
    return (out, hit) if with_flag else out


def sector_argument(sect: SectorModel, theta):
    """Map a sector-SIR argument onto the unsectorized CDF argument."""
    if sect.sectors == 1:
        return theta
    q, s = sect.front_to_back, sect.sectors
    theta = np.asarray(theta, dtype=float)
    with np.errstate(divide="ignore"):
        return (q + s - 1.0) / (q / theta - s + 1.0)


def sector_argument_inv(sect: SectorModel, u):
    """Inverse map: unsectorized argument back to the sector-SIR value."""
    if sect.sectors == 1:
        return u
    q, s = sect.front_to_back, sect.sectors
    u = np.asarray(u, dtype=float)
    return q * u / ((s - 1.0) * u + q + s - 1.0)


def sector_sir_cdf(model: PathModel, sect: SectorModel, theta):
    """CDF of the sector SIR; hits 1 exactly at the cap Q/(S-1)."""
    if sect.sectors == 1:
        return sir_cdf(model, theta)
    theta = np.asarray(theta, dtype=float)
    scalar = theta.ndim == 0
    theta = np.atleast_1d(theta)
    if np.any(theta < 0):
        raise ValueError("theta must be nonnegative")
    out = np.ones_like(theta)
    below = theta < sect.sir_cap
    if below.any():
        out[below] = sir_cdf(model, sector_argument(sect, theta[below]))
    return float(out[0]) if scalar else out


def shifted_sir_cdf(model: PathModel, theta, shift: float):
    """``sir_cdf(theta / shift)``; a triangular lattice without shadowing
    matches the Poisson CDF shifted by 2.188 (3.4 dB)."""
    if shift < 1.0:
        raise ValueError("shift must be >= 1")
    return sir_cdf(model, np.asarray(theta, dtype=float) / shift)


def sir_quantile(model: PathModel, p: float, sect: SectorModel = OMNI) -> float:
    """Smallest theta with CDF >= p (left endpoint on the constant segment)."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly between 0 and 1")

    def cdf(t):
        return sector_sir_cdf(model, sect, t)

    lo = 0.0
    hi = 1.0
    cap = sect.sir_cap
    if math.isfinite(cap):
        hi = cap
    else:
        while cdf(hi) < p:
            hi *= 4.0
            if hi > 1e18:
                raise RuntimeError("quantile bracket failure")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if cdf(mid) >= p:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
    return hi
