"""Ergodic spectral efficiency: rate curves C(rho), their distribution over
the network, coverage tails, lognormal fits, and spatial averages.

The distribution layer only ever composes a rate curve with the SIR CDF
(``F_C(gamma) = F_rho(C^-1(gamma))``), so every curve here is strictly
increasing and invertible.  Averages integrate a curve against the piecewise
SIR density; the Pareto tail (theta >= 1) is folded onto a bounded interval
with ``v = theta^-delta`` so no truncation error is incurred.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .quadrature import DEFAULT_SPEC, QuadratureSpec, integrate
from .sirdist import (FOUR_BRANCH, OMNI, THREE_BRANCH, PathModel, SectorModel,
                      b_delta_prime, sector_argument_inv, sector_sir_cdf,
                      sir_quantile)
from .special import (LOG2E, en_scaled, erf, exp_integral_en, gauss_2f1,
                      kummer_1f1, reg_lower_gamma)

__all__ = [
    "MimoConfig", "SeCurve", "LognormalFit",
    "c_siso", "c_siso_approx", "rho_from_c", "c_mimo", "c_mimo_2x2_approx",
    "siso_exact_curve", "siso_approx_curve", "mimo_curve",
    "mimo_2x2_approx_curve",
    "curve_from_key",
    "se_cdf", "se_quantile", "coverage_tail", "coverage_quantile",
    "inst_sir_cdf_eta4", "inst_coverage_se_eta4",
    "lognormal_fit", "mean_se", "mean_se_2x2_closed_eta4", "mean_se_general",
    "mean_se_cub",
]


# ---------------------------------------------------------------------------
# rate curves

@dataclass(frozen=True)
class MimoConfig:
    """Antenna counts; m/n are the min/max that the capacity formula uses."""

    n_t: int
    n_r: int
    m: int = field(init=False)
    n: int = field(init=False)

    def __post_init__(self):
        if self.n_t < 1 or self.n_r < 1:
            raise ValueError("antenna counts must be >= 1")
        if max(self.n_t, self.n_r) > 8:
            raise ValueError("antenna counts above 8 are not supported")
        object.__setattr__(self, "m", min(self.n_t, self.n_r))
        object.__setattr__(self, "n", max(self.n_t, self.n_r))


def _expint_weights(cfg: MimoConfig) -> np.ndarray:
    """Collapse the capacity triple sum into weights on E_p(n_t / rho).

    The closed-form ergodic MIMO capacity is a finite sum of exponential
    integrals; collecting the exactly-rational coefficients per order p makes
    both the curve and its spatial average a single pass over p.  Index 0 of
    the returned array is the weight of E_1.
    """
    m, n = cfg.m, cfg.n
    w: dict[int, Fraction] = {}
    for i in range(m):
        for j in range(i + 1):
            for ell in range(2 * j + 1):
                coeff = (Fraction(math.comb(2 * i - 2 * j, i - j))
                         * math.comb(2 * j + 2 * n - 2 * m, 2 * j - ell)
                         * (-1) ** ell
                         * math.factorial(2 * j)
                         * math.factorial(n - m + ell)
                         / (Fraction(2) ** (2 * i - ell)
                            * math.factorial(j)
                            * math.factorial(ell)
                            * math.factorial(n - m + j)))
                for q in range(n - m + ell + 1):
                    w[q + 1] = w.get(q + 1, Fraction(0)) + coeff
    pmax = max(w)
    out = np.zeros(pmax)
    for p, v in w.items():
        out[p - 1] = float(v)
    return out


def c_siso(rho):
    """Rayleigh SISO spectral efficiency e^(1/rho) E_1(1/rho) log2 e.

    Evaluated through the scaled exponential integral, so there is no
    overflow at small rho and the low-SNR limit C ~ rho log2 e is exact.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("rho must be positive")
    out = en_scaled(1, 1.0 / rho) * LOG2E
    return float(out) if np.ndim(out) == 0 else out


def c_siso_approx(rho):
    """Invertible fit 1.4 ln(1 + 0.82 rho) to the SISO curve."""
    rho = np.asarray(rho, dtype=float)
    out = 1.4 * np.log1p(0.82 * rho)
    return float(out) if out.ndim == 0 else out


def rho_from_c(c):
    """Exact algebraic inverse of :func:`c_siso_approx`."""
    c = np.asarray(c, dtype=float)
    out = np.expm1(c / 1.4) / 0.82
    return float(out) if out.ndim == 0 else out


def c_mimo(cfg: MimoConfig, rho):
    """Ergodic capacity of an n_r x n_t IID-Rayleigh channel at SNR rho."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("rho must be positive")
    x = cfg.n_t / rho
    w = _WEIGHT_CACHE.get((cfg.n_t, cfg.n_r))
    if w is None:
        w = _expint_weights(cfg)
        _WEIGHT_CACHE[(cfg.n_t, cfg.n_r)] = w
    total = np.zeros_like(x)
    for p, wp in enumerate(w, start=1):
        if wp != 0.0:
            total = total + wp * en_scaled(p, x)
    out = total * LOG2E
    return float(out) if out.ndim == 0 else out


_WEIGHT_CACHE: dict[tuple, np.ndarray] = {}


def c_mimo_2x2_approx(rho):
    """2x2 shortcut 2.8 ln(1 + 0.41 rho) + e^(-1/rho) log2 e."""
    rho = np.asarray(rho, dtype=float)
    out = 2.8 * np.log1p(0.41 * rho) + np.exp(-1.0 / rho) * LOG2E
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SeCurve:
    """A strictly increasing rho -> bits/s/Hz map with a numeric inverse."""

    label: str
    n_rx: int
    fn: Callable
    closed_inverse: Callable | None = None

    def __call__(self, rho):
        return self.fn(rho)

    def inverse(self, c: float) -> float:
        """rho with fn(rho) = c; bisection on [1e-9, 1e9] unless closed."""
        if c <= 0:
            raise ValueError("spectral efficiency must be positive")
        if self.closed_inverse is not None:
            return float(self.closed_inverse(c))
        lo, hi = 1e-9, 1e9
        flo = self.fn(lo)
        if c <= flo:
            # below the bracket the curve is linear in rho to high accuracy
            return c * lo / flo
        if c >= self.fn(hi):
            raise ValueError(f"{c} exceeds the invertible range of {self.label}")
        for _ in range(200):
            mid = math.sqrt(lo * hi)
            if self.fn(mid) < c:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-10 * (1.0 + hi):
                break
        return 0.5 * (lo + hi)


def siso_exact_curve() -> SeCurve:
    return SeCurve("SISO exact", 1, c_siso)


def siso_approx_curve() -> SeCurve:
    return SeCurve("SISO approx", 1, c_siso_approx, rho_from_c)


def mimo_curve(cfg: MimoConfig) -> SeCurve:
    # functools.partial keeps the curve picklable for the simulation workers
    return SeCurve(f"MIMO {cfg.n_r}x{cfg.n_t} exact", cfg.n_r,
                   functools.partial(c_mimo, cfg))


def mimo_2x2_approx_curve() -> SeCurve:
    return SeCurve("MIMO 2x2 approx", 2, c_mimo_2x2_approx)


def curve_from_key(key: str) -> SeCurve:
    """Build a curve from a short config-file / CLI key.

    Accepted: ``siso``, ``siso-approx``, ``mimo:NTxNR``, ``mimo-2x2-approx``.
    """
    if key == "siso":
        return siso_exact_curve()
    if key == "siso-approx":
        return siso_approx_curve()
    if key == "mimo-2x2-approx":
        return mimo_2x2_approx_curve()
    if key.startswith("mimo:"):
        nt, _, nr = key[5:].partition("x")
        return mimo_curve(MimoConfig(int(nt), int(nr)))
    raise ValueError(f"unknown curve key {key!r}")


# ---------------------------------------------------------------------------
# distribution and coverage

def se_cdf(model: PathModel, curve: SeCurve, gamma, sect: SectorModel = OMNI):
    """CDF of the ergodic spectral efficiency, F_rho(curve^-1(gamma))."""
    gamma = np.asarray(gamma, dtype=float)
    scalar = gamma.ndim == 0
    gamma = np.atleast_1d(gamma)
    if np.any(gamma < 0):
        raise ValueError("gamma must be nonnegative")
    cap = sect.sir_cap
    se_cap = curve(cap) if math.isfinite(cap) else math.inf
    out = np.empty_like(gamma)
    for i, g in enumerate(gamma):
        if g == 0.0:
            out[i] = 0.0
        elif g >= se_cap:
            out[i] = 1.0
        else:
            out[i] = sector_sir_cdf(model, sect, curve.inverse(float(g)))
    return float(out[0]) if scalar else out


def se_quantile(model: PathModel, curve: SeCurve, p: float,
                sect: SectorModel = OMNI) -> float:
    """Inverse of :func:`se_cdf`: the SE level at probability ``p``."""
    return float(curve(sir_quantile(model, p, sect)))


def coverage_tail(model: PathModel, n_r: int, gamma):
    """Lower-tail law F_C(gamma) ~ exp(1.15 s* n_r / gamma).

    Warns when the result exceeds the constant-segment level, i.e. outside
    the tail's validity region.
    """
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0):
        raise ValueError("gamma must be positive")
    out = np.exp(1.15 * model.s_star * n_r / gamma)
    if np.any(out > model.a_delta):
        warnings.warn("coverage_tail evaluated above its validity region "
                      f"(result > {model.a_delta:.3f})", stacklevel=2)
    return float(out) if out.ndim == 0 else out


def coverage_quantile(model: PathModel, n_r: int, xi: float) -> float:
    """Spectral efficiency achievable on a share 1 - xi of the network."""
    if not 0.0 < xi <= model.a_delta:
        raise ValueError(f"xi must lie in (0, {model.a_delta:.3f}]")
    return 1.15 * model.s_star * n_r / math.log(xi)


def inst_sir_cdf_eta4(theta):
    """Instantaneous-SIR CDF for eta = 4 (Rayleigh): the classic
    1 - 1/(1 + sqrt(t) arctan sqrt(t)).  Included only to reproduce how
    misleading instantaneous-SIR coverage is versus the ergodic one."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise ValueError("theta must be nonnegative")
    rt = np.sqrt(theta)
    out = 1.0 - 1.0 / (1.0 + rt * np.arctan(rt))
    return float(out) if out.ndim == 0 else out


def inst_coverage_se_eta4(xi: float) -> float:
    """SE value that instantaneous-SIR statistics would assign to coverage
    share 1 - xi: log2(1 + theta) at the xi-quantile of the SIR CDF."""
    if not 0.0 < xi < 1.0:
        raise ValueError("xi must lie in (0, 1)")
    lo, hi = 0.0, 1.0
    while inst_sir_cdf_eta4(hi) < xi:
        hi *= 4.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if inst_sir_cdf_eta4(mid) < xi:
            lo = mid
        else:
            hi = mid
    theta = 0.5 * (lo + hi)
    return math.log2(1.0 + theta)


# ---------------------------------------------------------------------------
# averaging against the SIR density

def _average_over_sir(model: PathModel, h: Callable, sect: SectorModel,
                      spec: QuadratureSpec, mode: str) -> float:
    """E[h(rho_S)] against the chosen branch family's density.

    Substituting the unsectorized argument u (rho_S = T^-1(u)) turns the
    sector average into an integral against the plain density, and
    ``v = u^-delta`` maps the Pareto tail onto (0, 1].
    """
    m = model.with_mode(mode)
    d, sd, ss = m.delta, m.sinc_delta, m.s_star
    t1 = m.theta_const

    def hs(u):
        return np.asarray(h(sector_argument_inv(sect, np.asarray(u, dtype=float))))

    def head(u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore", over="ignore", under="ignore"):
            dens = -ss * np.exp(ss / u) / (u * u)
        return hs(u) * np.where(np.isfinite(dens), dens, 0.0)

    total = integrate(head, 0.0, t1, spec)
    if mode == FOUR_BRANCH:
        def mid(u):
            u = np.asarray(u, dtype=float)
            dens = (d * sd * u ** (-d - 1.0)
                    + b_delta_prime(m, u / (1.0 - u)) / (1.0 - u) ** 2)
            return hs(u) * dens

        total += integrate(mid, 0.5, 1.0, spec)

    def tail(v):
        v = np.asarray(v, dtype=float)
        # clamp keeps u finite; the curves are flat in log far out there
        return sd * hs(np.minimum(v ** (-1.0 / d), 1e250))

    total += integrate(tail, 0.0, 1.0, spec)
    return total


@dataclass(frozen=True)
class LognormalFit:
    """Gaussian fit of the natural log of the spectral efficiency."""

    mu: float
    sigma2: float

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")


def lognormal_fit(model: PathModel, curve: SeCurve, sect: SectorModel = OMNI,
                  spec: QuadratureSpec = DEFAULT_SPEC,
                  density_mode: str | None = None) -> LognormalFit:
    """Moments of ln C over the network: mu and sigma^2 by quadrature.

    Defaults to the four-branch density; that family is the one whose
    moments reproduce the reference values for the 2x2 fit at eta = 4.
    """
    mode = FOUR_BRANCH if density_mode is None else density_mode
    mu = _average_over_sir(model, lambda t: np.log(curve(t)), sect, spec, mode)
    second = _average_over_sir(model, lambda t: np.log(curve(t)) ** 2,
                               sect, spec, mode)
    return LognormalFit(mu, max(second - mu * mu, 0.0))


def mean_se(model: PathModel, curve: SeCurve, sect: SectorModel = OMNI,
            spec: QuadratureSpec = DEFAULT_SPEC,
            density_mode: str | None = None) -> float:
    """Spatially averaged spectral efficiency, int C dF (three-branch
    density unless overridden)."""
    mode = THREE_BRANCH if density_mode is None else density_mode
    return _average_over_sir(model, curve, sect, spec, mode)


def mean_se_2x2_closed_eta4() -> float:
    """The closed erf/arctan form of the 2x2 spatial average at eta = 4."""
    return (0.26 + LOG2E / math.sqrt(math.pi) * erf(1.0)
            + 5.6 / math.pi * (math.sqrt(0.41)
                               * (math.pi - 2.0 * math.atan(math.sqrt(0.41)))
                               + math.log(1.41)))


def _lower_gamma_over_pow(d: float, u):
    """gamma(d, u) / u^d, vectorized, with the u -> 0 limit 1/d built in."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    small = u <= 1.0
    if small.any():
        us = u[small]
        total = np.full_like(us, 1.0 / d)
        f = np.ones_like(us)
        for k in range(1, 40):
            f = f * (-us) / k
            total = total + f / (d + k)
        out[small] = total
    big = ~small
    if big.any():
        ub = u[big]
        out[big] = math.gamma(d) * reg_lower_gamma(d, ub) / ub ** d
    return out


def mean_se_general(cfg: MimoConfig, model: PathModel,
                    spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Spatial average for any antenna pair by a single quadrature.

    The capacity triple sum is regrouped into exponential-integral weights,
    and the average of each e^x E_p(x) term against the three-branch density
    is the Laplace transform of that density, giving the integrand

        sum_p w_p (1+g)^-p * [ s*/(s*-g n_t) e^((s*-g n_t)/D)
                               + delta sinc(delta) gamma(delta, g n_t)/(g n_t)^delta ].
    """
    m3 = model.with_mode(THREE_BRANCH)
    d, sd, ss = m3.delta, m3.sinc_delta, m3.s_star
    big_d = m3.theta_const
    nt = float(cfg.n_t)
    w = _expint_weights(cfg)

    def bracket(g):
        g = np.asarray(g, dtype=float)
        u = g * nt
        with np.errstate(over="ignore", under="ignore"):
            expo = np.exp((ss - u) / big_d)
        first = ss / (ss - u) * expo
        return first + d * sd * _lower_gamma_over_pow(d, u)

    def weight_sum(g):
        g = np.asarray(g, dtype=float)
        inv = 1.0 / (1.0 + g)
        total = np.zeros_like(g)
        acc = np.ones_like(g)
        for wp in w:
            acc = acc * inv
            total = total + wp * acc
        return total

    def integrand(g):
        return weight_sum(g) * bracket(g)

    total = integrate(integrand, 0.0, 1.0, spec)

    def tail(v):
        v = np.asarray(v, dtype=float)
        g = v ** (-1.0 / d)
        return integrand(g) * g / (d * v)

    total += integrate(tail, 0.0, 1.0, spec)
    return LOG2E * total


def mean_se_cub(model: PathModel, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Spatial average of the full-CSI upper bound:
    int log2 e / 2F1(1, 1; 1-delta; g/(1+g)) dg."""
    d = model.delta

    def f(g):
        g = np.atleast_1d(np.asarray(g, dtype=float))
        # clamp: g/(1+g) must stay strictly below 1 under rounding
        z = np.minimum(g / (1.0 + g), 1.0 - 1e-12)
        return np.array([LOG2E / gauss_2f1(1.0, 1.0, 1.0 - d, zi) for zi in z])

    total = integrate(f, 0.0, 1.0, spec)

    def tail(v):
        v = np.atleast_1d(np.asarray(v, dtype=float))
        g = v ** (-1.0 / d)
        return f(g) * g / (d * v)

    total += integrate(tail, 0.0, 1.0, spec)
    return total


def mean_se_2x2_approx_analytic(model: PathModel) -> float:
    """Closed form of the 2x2 average using the approximate curve (general
    delta); kept as a cross-check against the quadrature route."""
    m3 = model.with_mode(THREE_BRANCH)
    d, sd, ss = m3.delta, m3.sinc_delta, m3.s_star
    big_d = m3.theta_const
    t1 = ss * LOG2E / (ss - 1.0) * math.exp((ss - 1.0) / big_d)
    t2 = kummer_1f1(d, 1.0 + d, -1.0) * sd * LOG2E
    t3 = (2.8 * (gauss_2f1(1.0, d, 1.0 + d, -2.44) + d * math.log(1.41))
          * sd / d)
    t4 = 2.8 * (exp_integral_en(1, -ss * (0.41 + 1.0 / big_d))
                / math.exp(0.41 * ss)
                - exp_integral_en(1, -ss / big_d)
                + math.exp(ss / big_d) * math.log(1.0 + 0.41 * big_d))
    return t1 + t2 + t3 + t4
