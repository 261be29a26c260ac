"""Simulation baselines: network geometries (PPP and shadowed triangular
lattice), local-average SIR sampling, the exact mutual information under
non-Gaussian interference, and the full-CSI upper bound.

Randomness discipline: every task owns a counter-derived substream of the
master seed (``substream(seed, purpose, index)``), so results are bit-for-bit
reproducible regardless of the worker count.  Distances are in km, densities
in BS/km^2; all SIR quantities are scale-free so the units never leak out.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .quadrature import DEFAULT_SPEC, QuadratureSpec, integrate
from .seff import SeCurve, MimoConfig
from .sirdist import OMNI, SectorModel

__all__ = [
    "SimConfig", "GeometrySample", "EstimateWithError", "DistributionEstimate",
    "BudgetError", "substream", "expected_kth_distance", "fig1_sample",
    "sample_ppp", "build_lattice", "apply_shadowing", "local_avg_sir",
    "c_exact_siso", "c_exact_mimo", "c_ub_realization", "c_ub_mimo_mc",
    "estimate_distribution", "cv_spatial_mean", "cv_mean_c_exact",
    "ks_distance", "rho_samples",
]

_CHUNK = 512  # geometries per bulk task; fixed so results are worker-independent


class BudgetError(RuntimeError):
    """The simulation budget was exhausted before reaching the error target."""


@dataclass(frozen=True)
class EstimateWithError:
    value: float
    std_error: float
    n_samples: int

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("std_error must be nonnegative")

    @property
    def ci99(self) -> float:
        """Half width of the normal-quantile 99% confidence interval."""
        return 2.5758293035489 * self.std_error


@dataclass
class GeometrySample:
    """Link distances (ascending, km) of one network realization, with
    optional per-BS shadowing gains and sector orientations."""

    distances: np.ndarray
    shadow_gains: np.ndarray | None = None
    sector_offsets: np.ndarray | None = None
    serving_index: int = 0

    def effective_powers(self, eta: float) -> np.ndarray:
        """Per-BS large-scale received powers gain * r^-eta (P = 1)."""
        p = self.distances ** -eta
        if self.shadow_gains is not None:
            p = p * self.shadow_gains
        return p


@dataclass(frozen=True)
class SimConfig:
    """Knobs for a simulation run; defaults are desk scale."""

    density: float = 2.0             # BS/km^2
    region_radius: float | None = None  # km; None -> ~1000 BSs on average
    lattice_rings: int | None = None
    lattice_target: int = 977
    shadow_sigma_db: float = 0.0
    seed: int = 0
    n_geometries: int = 500
    n_fading: int = 2000
    n_mixture: int = 512
    n_batches: int = 32
    truncate_interferers: int | None = None
    geometry: str = "ppp"            # "ppp" | "lattice"
    noise_over_p: float = 0.0

    def __post_init__(self):
        if self.density <= 0:
            raise ValueError("density must be positive")
        for name in ("n_geometries", "n_fading", "n_mixture", "n_batches"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.geometry not in ("ppp", "lattice"):
            raise ValueError("geometry must be 'ppp' or 'lattice'")
        if self.shadow_sigma_db < 0:
            raise ValueError("shadow_sigma_db must be nonnegative")

    @property
    def radius(self) -> float:
        if self.region_radius is not None:
            return self.region_radius
        return math.sqrt(1000.0 / (math.pi * self.density))


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent deterministic generator for task ``key`` of ``seed``."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))
    return np.random.Generator(np.random.Philox(ss))


def expected_kth_distance(k: int, density: float) -> float:
    """E[distance to the k-th nearest PPP point], Gamma(k+1.5)/(sqrt(pi l) k!)."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    return math.exp(math.lgamma(k + 1.5) - math.lgamma(k + 1.0)) \
        / math.sqrt(math.pi * density)


def fig1_sample(r0: float, density: float = 2.0, k_max: int = 100) -> GeometrySample:
    """The fixed benchmark geometry: serving link at r0 (km) and interferers
    at the expected k-th nearest-neighbour distances, k = 1..k_max."""
    rk = np.array([expected_kth_distance(k, density) for k in range(1, k_max + 1)])
    return GeometrySample(distances=np.concatenate([[r0], rk]), serving_index=0)


def sample_ppp(config: SimConfig, rng: np.random.Generator) -> GeometrySample:
    """One PPP realization on the disk, distances sorted ascending."""
    r = config.radius
    n = max(int(rng.poisson(config.density * math.pi * r * r)), 2)
    d = r * np.sqrt(rng.random(n))
    d.sort()
    return GeometrySample(distances=d)


def build_lattice(config: SimConfig) -> np.ndarray:
    """Triangular-lattice BS sites (hexagonal cells) on a disk, (N, 2) km.

    Site spacing comes from the density (2 / (sqrt(3) a^2) sites per km^2).
    With ``lattice_rings`` set, that many hexagonal shells are generated;
    otherwise the disk is grown until it holds at least ``lattice_target``
    sites.
    """
    a = math.sqrt(2.0 / (math.sqrt(3.0) * config.density))
    if config.lattice_rings is not None:
        rings = config.lattice_rings
        pts = [(i, j) for i in range(-rings, rings + 1)
               for j in range(-rings, rings + 1)
               if max(abs(i), abs(j), abs(i + j)) <= rings]
        ij = np.array(pts, dtype=float)
        xy = np.empty_like(ij)
        xy[:, 0] = a * (ij[:, 0] + 0.5 * ij[:, 1])
        xy[:, 1] = a * (math.sqrt(3.0) / 2.0) * ij[:, 1]
        return xy
    target = config.lattice_target
    radius = math.sqrt(target / (config.density * math.pi))
    for _ in range(64):
        span = int(math.ceil(radius / a)) + 2
        i, j = np.meshgrid(np.arange(-span, span + 1), np.arange(-span, span + 1))
        x = a * (i + 0.5 * j)
        y = a * (math.sqrt(3.0) / 2.0) * j
        keep = x * x + y * y <= radius * radius
        if keep.sum() >= target:
            return np.column_stack([x[keep], y[keep]])
        radius *= 1.02
    raise RuntimeError("lattice construction failed to reach the target count")


def apply_shadowing(distances: np.ndarray, sigma_db: float, eta: float,
                    rng: np.random.Generator) -> GeometrySample:
    """Attach IID lognormal gains (unit median, sigma_db in dB) and pick the
    serving BS as the strongest gain * r^-eta."""
    if sigma_db < 0:
        raise ValueError("sigma_db must be nonnegative")
    d = np.asarray(distances, dtype=float)
    order = np.argsort(d)
    d = d[order]
    if sigma_db == 0.0:
        return GeometrySample(distances=d, shadow_gains=None, serving_index=0)
    gains = 10.0 ** (sigma_db * rng.standard_normal(d.size) / 10.0)
    serving = int(np.argmax(gains * d ** -eta))
    return GeometrySample(distances=d, shadow_gains=gains, serving_index=serving)


def local_avg_sir(sample: GeometrySample, eta: float,
                  sect: SectorModel = OMNI, noise_over_p: float = 0.0) -> float:
    """Local-average SINR of the user at the origin for one geometry.

    Sectorized value G x0 / ((S-1) g x0 + S I + N0/P); the sector
    orientations drop out exactly because every interfering BS points exactly
    one full-gain lobe at any azimuth.
    """
    if sample.distances.size < 2:
        raise ValueError("need at least two BSs for an interference-limited SIR")
    x = sample.effective_powers(eta)
    x0 = x[sample.serving_index]
    interf = float(x.sum() - x0)
    s = sect.sectors
    if s == 1:
        return float(x0 / (interf + noise_over_p))
    g_in, g_out = sect.gain_in, sect.gain_out
    return float(g_in * x0 / ((s - 1) * g_out * x0 + s * interf + noise_over_p))


def _split_powers(sample: GeometrySample, eta: float,
                  truncate: int | None) -> tuple[float, np.ndarray]:
    """Serving power and the (optionally truncated) interferer powers."""
    x = sample.effective_powers(eta)
    g0 = float(x[sample.serving_index])
    w = np.delete(x, sample.serving_index)
    if truncate is not None and w.size > truncate:
        w = np.sort(w)[::-1][:truncate]
    return g0, w


def _batch_sizes(total: int, batches: int) -> list[int]:
    base = total // batches
    sizes = [base] * batches
    for i in range(total - base * batches):
        sizes[i] += 1
    return [s for s in sizes if s > 0]


def c_exact_siso(sample: GeometrySample, eta: float, rng: np.random.Generator,
                 n_fading: int = 2000, n_mixture: int = 512,
                 n_batches: int = 32, truncate: int | None = None,
                 noise_over_p: float = 0.0,
                 std_error_cap: float | None = None) -> EstimateWithError:
    """Exact SISO mutual information h(y) - h(z) by entropy estimation.

    Both y and z are complex Gaussian scale mixtures once the interferer
    fadings are integrated out; their densities are estimated by averaging
    the conditional Gaussian density over ``n_mixture`` fresh fading draws.
    Each batch gets its own mixture pool so the batch-mean spread is an
    honest standard error.
    """
    g0, w = _split_powers(sample, eta, truncate)
    if w.size == 0 and noise_over_p == 0.0:
        raise ValueError("no interferers and no noise: entropy undefined")
    vals = []
    for nb in _batch_sizes(n_fading, n_batches):
        v_pool = w @ rng.exponential(size=(w.size, n_mixture)) + noise_over_p \
            if w.size else np.full(n_mixture, noise_over_p)
        v_i = w @ rng.exponential(size=(w.size, nb)) + noise_over_p \
            if w.size else np.full(nb, noise_over_p)
        g_i = g0 * rng.exponential(size=nb)
        z_sq = v_i * rng.exponential(size=nb)
        y_sq = (v_i + g_i) * rng.exponential(size=nb)
        # mixture log-densities at the sampled points (log pi cancels in the MI)
        log_fz = _logmeanexp(-z_sq[:, None] / v_pool[None, :]
                             - np.log(v_pool)[None, :])
        vy = v_pool[None, :] + g_i[:, None]
        log_fy = _logmeanexp(-y_sq[:, None] / vy - np.log(vy))
        vals.append(float(np.mean(log_fz - log_fy)) / math.log(2.0))
    vals = np.asarray(vals)
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    if std_error_cap is not None and se > std_error_cap:
        warnings.warn(f"c_exact std error {se:.4f} above cap {std_error_cap}",
                      stacklevel=2)
    return EstimateWithError(float(vals.mean()), se, n_fading)


def _cn_pairs(rng: np.random.Generator, *shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) \
        / math.sqrt(2.0)


def _interference_cov(w: np.ndarray, n_t: int, n_r: int, count: int,
                      rng: np.random.Generator, noise: float) -> np.ndarray:
    """``count`` draws of sum_k (w_k / n_t) H_k H_k^H + noise I, chunked in k
    to bound memory."""
    cov = np.zeros((count, n_r, n_r), dtype=complex)
    for start in range(0, w.size, 128):
        wk = w[start:start + 128]
        h = _cn_pairs(rng, count, wk.size, n_r, n_t)
        cov += np.einsum("k,ckab,ckdb->cad", wk / n_t, h, h.conj(),
                         optimize=True)
    cov[:, np.arange(n_r), np.arange(n_r)] += noise
    return cov


def _chol_sample(cov: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One CN(0, cov) draw per stacked covariance."""
    ell = np.linalg.cholesky(cov)
    u = _cn_pairs(rng, cov.shape[0], cov.shape[1])
    return np.einsum("cab,cb->ca", ell, u)


def _gauss_mix_logpdf(points: np.ndarray, covs: np.ndarray,
                      offsets: np.ndarray | None) -> np.ndarray:
    """log of mean_m CN-density(points_i; covs_m [+ offsets_i]), any i/m.

    Dimensions 1 and 2 take a closed-form determinant/solve; larger receive
    the generic (slower) batched route.
    """
    n_i, n_r = points.shape
    n_m = covs.shape[0]
    if n_r == 1:
        v = covs[:, 0, 0].real[None, :]
        if offsets is not None:
            v = v + offsets[:, 0, 0].real[:, None]
        q = np.abs(points[:, 0]) ** 2
        log_comp = -q[:, None] / v - np.log(v)
        return _logmeanexp(log_comp) - math.log(math.pi)
    if n_r == 2:
        a = covs[:, 0, 0].real[None, :]
        c = covs[:, 1, 1].real[None, :]
        b = covs[:, 0, 1][None, :]
        if offsets is not None:
            a = a + offsets[:, 0, 0].real[:, None]
            c = c + offsets[:, 1, 1].real[:, None]
            b = b + offsets[:, 0, 1][:, None]
        det = (a * c - np.abs(b) ** 2).real
        z1 = points[:, 0][:, None]
        z2 = points[:, 1][:, None]
        quad = (c * np.abs(z1) ** 2 + a * np.abs(z2) ** 2
                - 2.0 * np.real(b * np.conj(z1) * z2)) / det
        log_comp = -quad - np.log(det)
        return _logmeanexp(log_comp) - 2.0 * math.log(math.pi)
    log_comp = np.empty((n_i, n_m))
    for m in range(n_m):
        cc = covs[m][None, :, :]
        if offsets is not None:
            cc = cc + offsets
        sol = np.linalg.solve(cc, points[:, :, None])[:, :, 0]
        quad = np.einsum("ia,ia->i", points.conj(), sol).real
        sign, logdet = np.linalg.slogdet(cc)
        log_comp[:, m] = -quad - logdet.real
    return _logmeanexp(log_comp) - n_r * math.log(math.pi)


def _logmeanexp(a: np.ndarray) -> np.ndarray:
    """Row-wise log(mean(exp())), stable against underflow."""
    peak = a.max(axis=1, keepdims=True)
    return peak[:, 0] + np.log(np.mean(np.exp(a - peak), axis=1))


def c_exact_mimo(sample: GeometrySample, cfg: MimoConfig, eta: float,
                 rng: np.random.Generator, n_fading: int = 2000,
                 n_mixture: int = 512, n_batches: int = 32,
                 truncate: int | None = None, noise_over_p: float = 0.0,
                 std_error_cap: float | None = None) -> EstimateWithError:
    """Vector version of :func:`c_exact_siso`; per-BS power is split across
    the n_t transmit antennas."""
    g0, w = _split_powers(sample, eta, truncate)
    if w.size == 0 and noise_over_p == 0.0:
        raise ValueError("no interferers and no noise: entropy undefined")
    n_t, n_r = cfg.n_t, cfg.n_r
    vals = []
    for nb in _batch_sizes(n_fading, n_batches):
        pool = _interference_cov(w, n_t, n_r, n_mixture, rng, noise_over_p)
        cov_i = _interference_cov(w, n_t, n_r, nb, rng, noise_over_p)
        h0 = _cn_pairs(rng, nb, n_r, n_t)
        sig = np.einsum("iab,idb->iad", h0, h0.conj()) * (g0 / n_t)
        z = _chol_sample(cov_i, rng)
        y = _chol_sample(cov_i + sig, rng)
        log_fz = _gauss_mix_logpdf(z, pool, None)
        log_fy = _gauss_mix_logpdf(y, pool, sig)
        vals.append(float(np.mean(log_fz - log_fy)) / math.log(2.0))
    vals = np.asarray(vals)
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    if std_error_cap is not None and se > std_error_cap:
        warnings.warn(f"c_exact std error {se:.4f} above cap {std_error_cap}",
                      stacklevel=2)
    return EstimateWithError(float(vals.mean()), se, n_fading)


def c_ub_realization(sample: GeometrySample, eta: float,
                     noise_over_p: float = 0.0,
                     spec: QuadratureSpec = DEFAULT_SPEC,
                     truncate: int | None = None) -> float:
    """Full-CSI spectral efficiency of one geometry via the product integral

        log2 e * int_0^inf e^(-x N0 r0^eta / P) / (1+x) prod_k 1/(1 + x w_k/g0) dx.
    """
    g0, w = _split_powers(sample, eta, truncate)
    if w.size == 0 and noise_over_p == 0.0:
        raise ValueError("the interference-free, noise-free integral diverges")
    ratios = w / g0
    mu = noise_over_p / g0

    def integrand(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        with np.errstate(over="ignore"):
            logs = np.log1p(np.outer(x, ratios)).sum(axis=1) if ratios.size \
                else np.zeros_like(x)
            out = np.exp(-mu * x - logs) / (1.0 + x)
        return out

    return integrate(integrand, 0.0, math.inf, spec) * math.log2(math.e)


def c_ub_mimo_mc(sample: GeometrySample, cfg: MimoConfig, eta: float,
                 rng: np.random.Generator, n_draws: int = 20000,
                 truncate: int | None = None,
                 noise_over_p: float = 0.0) -> EstimateWithError:
    """Monte-Carlo full-CSI bound for MIMO, E log2 det(I + R^-1 G0)."""
    g0, w = _split_powers(sample, eta, truncate)
    if w.size == 0 and noise_over_p == 0.0:
        raise ValueError("need interference or noise")
    n_t, n_r = cfg.n_t, cfg.n_r
    vals = np.empty(n_draws)
    done = 0
    while done < n_draws:
        count = min(2048, n_draws - done)
        cov = _interference_cov(w, n_t, n_r, count, rng, noise_over_p)
        h0 = _cn_pairs(rng, count, n_r, n_t)
        sig = np.einsum("iab,idb->iad", h0, h0.conj()) * (g0 / n_t)
        num = np.linalg.slogdet(cov + sig)[1]
        den = np.linalg.slogdet(cov)[1]
        vals[done:done + count] = (num - den) / math.log(2.0)
        done += count
    return EstimateWithError(float(vals.mean()),
                             float(vals.std(ddof=1) / math.sqrt(n_draws)),
                             n_draws)


def ks_distance(samples: np.ndarray, cdf) -> float:
    """Kolmogorov-Smirnov sup distance between an empirical sample and an
    analytic CDF callable (evaluated vectorized at the sample points)."""
    xs = np.sort(np.asarray(samples, dtype=float))
    if xs.size == 0:
        raise ValueError("empty sample")
    f = np.asarray(cdf(xs), dtype=float)
    n = xs.size
    hi = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    return float(max(np.max(hi - f), np.max(f - lo)))


# ---------------------------------------------------------------------------
# bulk SIR sampling and the distribution driver

def _bulk_ppp_rho(config: SimConfig, eta: float, sect: SectorModel,
                  count: int, chunk_index: int) -> np.ndarray:
    """``count`` independent PPP SIR draws using substream ``chunk_index``."""
    rng = substream(config.seed, 1, chunk_index)
    r = config.radius
    mean_n = config.density * math.pi * r * r
    counts = np.maximum(rng.poisson(mean_n, size=count), 2)
    total = int(counts.sum())
    radii = r * np.sqrt(rng.random(total))
    powers = radii ** -eta
    edges = np.concatenate([[0], np.cumsum(counts)])[:-1]
    sums = np.add.reduceat(powers, edges)
    x0 = np.maximum.reduceat(powers, edges)
    interf = sums - x0
    noise = config.noise_over_p
    if sect.sectors == 1:
        return x0 / (interf + noise)
    s, g_in, g_out = sect.sectors, sect.gain_in, sect.gain_out
    return g_in * x0 / ((s - 1) * g_out * x0 + s * interf + noise)


def _lattice_drops(config: SimConfig, rng: np.random.Generator,
                   count: int) -> tuple[np.ndarray, np.ndarray]:
    """User positions uniform over one central lattice period.

    By periodicity this is exactly the typical-user distribution, so no
    partially-covered boundary cells bias the within-cell statistics; the
    surrounding disk of sites mitigates the remaining edge effects.
    """
    a = math.sqrt(2.0 / (math.sqrt(3.0) * config.density))
    w1 = rng.random(count) - 0.5
    w2 = rng.random(count) - 0.5
    ux = a * (w1 + 0.5 * w2)
    uy = a * (math.sqrt(3.0) / 2.0) * w2
    return ux, uy


def _bulk_lattice_rho(config: SimConfig, eta: float, sect: SectorModel,
                      count: int, chunk_index: int,
                      sites: np.ndarray) -> np.ndarray:
    """``count`` user drops on the lattice using substream ``chunk_index``."""
    rng = substream(config.seed, 1, chunk_index)
    ux, uy = _lattice_drops(config, rng, count)
    d = np.hypot(sites[None, :, 0] - ux[:, None],
                 sites[None, :, 1] - uy[:, None])
    powers = d ** -eta
    if config.shadow_sigma_db > 0.0:
        gains = 10.0 ** (config.shadow_sigma_db
                         * rng.standard_normal(d.shape) / 10.0)
        powers = powers * gains
    x0 = powers.max(axis=1)
    interf = powers.sum(axis=1) - x0
    noise = config.noise_over_p
    if sect.sectors == 1:
        return x0 / (interf + noise)
    s, g_in, g_out = sect.sectors, sect.gain_in, sect.gain_out
    return g_in * x0 / ((s - 1) * g_out * x0 + s * interf + noise)


def rho_samples(config: SimConfig, eta: float, sect: SectorModel = OMNI,
                workers: int | None = None) -> np.ndarray:
    """Vector of per-geometry local-average SIR draws (deterministic in
    (seed, config) independently of the worker count)."""
    n = config.n_geometries
    chunks = [(i, min(_CHUNK, n - i * _CHUNK))
              for i in range((n + _CHUNK - 1) // _CHUNK)]
    sites = build_lattice(config) if config.geometry == "lattice" else None
    tasks = [(config, eta, sect, c, i, sites) for i, c in chunks]
    parts = _parallel_map(_rho_chunk_task, tasks, workers)
    return np.concatenate(parts)


def _rho_chunk_task(args):
    config, eta, sect, count, index, sites = args
    if config.geometry == "lattice":
        return _bulk_lattice_rho(config, eta, sect, count, index, sites)
    return _bulk_ppp_rho(config, eta, sect, count, index)


@dataclass
class DistributionEstimate:
    """Per-geometry values plus the estimate of their spatial mean; for the
    exact/upper-bound quantities ``paired_analytic`` holds C(rho) on the very
    same geometries (the variance-reduction pairing)."""

    samples: np.ndarray
    mean: EstimateWithError
    paired_analytic: np.ndarray | None = None

    @property
    def ecdf(self):
        xs = np.sort(self.samples)
        return xs, np.arange(1, xs.size + 1) / xs.size


def _geometry_for_task(config: SimConfig, eta: float,
                       rng: np.random.Generator,
                       sites: np.ndarray | None) -> GeometrySample:
    if config.geometry == "lattice":
        ux, uy = _lattice_drops(config, rng, 1)
        d = np.hypot(sites[:, 0] - ux[0], sites[:, 1] - uy[0])
        return apply_shadowing(d, config.shadow_sigma_db, eta, rng)
    return sample_ppp(config, rng)


def _heavy_task(args):
    (quantity, config, eta, sect, curve, mimo, index, sites) = args
    rng = substream(config.seed, 0, index)
    sample = _geometry_for_task(config, eta, rng, sites)
    rho = local_avg_sir(sample, eta, sect, config.noise_over_p)
    analytic = float(curve(rho)) if curve is not None else math.nan
    if quantity == "C_exact":
        if mimo is None or (mimo.n_t == 1 and mimo.n_r == 1):
            est = c_exact_siso(sample, eta, rng, config.n_fading,
                               config.n_mixture, config.n_batches,
                               config.truncate_interferers,
                               config.noise_over_p)
        else:
            est = c_exact_mimo(sample, mimo, eta, rng, config.n_fading,
                               config.n_mixture, config.n_batches,
                               config.truncate_interferers,
                               config.noise_over_p)
        return est.value, analytic
    if quantity == "C_ub":
        if mimo is None or (mimo.n_t == 1 and mimo.n_r == 1):
            val = c_ub_realization(sample, eta, config.noise_over_p,
                                   truncate=config.truncate_interferers)
        else:
            val = c_ub_mimo_mc(sample, mimo, eta, rng,
                               truncate=config.truncate_interferers,
                               noise_over_p=config.noise_over_p).value
        return val, analytic
    raise ValueError(f"unknown heavy quantity {quantity!r}")


def _resolve_workers(workers: int | None) -> int:
    if workers is not None:
        return max(1, workers)
    env = os.environ.get("CELLSEFF_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _parallel_map(fn, tasks, workers: int | None):
    n = _resolve_workers(workers)
    if n <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    try:
        import multiprocessing as mp
        with mp.get_context("fork").Pool(min(n, len(tasks))) as pool:
            return pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * n)))
    except (ImportError, OSError):
        return [fn(t) for t in tasks]


def estimate_distribution(quantity: str, config: SimConfig, eta: float,
                          curve: SeCurve | None = None,
                          sect: SectorModel = OMNI,
                          mimo: MimoConfig | None = None,
                          workers: int | None = None,
                          max_std_error: float | None = None
                          ) -> DistributionEstimate:
    """Per-geometry evaluation of a quantity over ``config.n_geometries``
    network realizations, fanned out over parallel workers.

    ``quantity`` is one of ``rho``, ``C_analytic_of_rho``, ``C_exact``,
    ``C_ub``.  The analytic quantities use fast bulk sampling; the exact and
    upper-bound quantities evaluate geometry by geometry and also report the
    paired C(rho) values for variance reduction.
    """
    if quantity in ("rho", "C_analytic_of_rho"):
        rho = rho_samples(config, eta, sect, workers)
        if quantity == "rho":
            samples = rho
        else:
            if curve is None:
                raise ValueError("C_analytic_of_rho requires a curve")
            samples = np.asarray(curve(rho), dtype=float)
        paired = None
    elif quantity in ("C_exact", "C_ub"):
        sites = build_lattice(config) if config.geometry == "lattice" else None
        tasks = [(quantity, config, eta, sect, curve, mimo, i, sites)
                 for i in range(config.n_geometries)]
        out = _parallel_map(_heavy_task, tasks, workers)
        samples = np.array([v for v, _ in out])
        paired = np.array([a for _, a in out])
        if curve is None:
            paired = None
    else:
        raise ValueError(f"unknown quantity {quantity!r}")
    n = samples.size
    se = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    mean = EstimateWithError(float(samples.mean()), se, n)
    if max_std_error is not None and se > max_std_error:
        raise BudgetError(
            f"std error {se:.4g} exceeds the requested cap {max_std_error}")
    return DistributionEstimate(samples, mean, paired)


def cv_spatial_mean(quantity: str, config: SimConfig, eta: float,
                    curve: SeCurve, mimo: MimoConfig | None = None,
                    n_cheap: int = 200_000,
                    workers: int | None = None) -> EstimateWithError:
    """Spatial mean of C_exact or C_ub with C(rho) as a control variate.

    E[X] = E[C] + E[X - C]: the first term is cheap (one curve evaluation per
    geometry) and is averaged over ``n_cheap`` geometries; the low-variance
    gap carries the expensive budget on ``config.n_geometries`` geometries.
    The result is an unbiased Monte-Carlo estimate, just with the dominant
    geometry-to-geometry variance moved onto the cheap term.
    """
    heavy = estimate_distribution(quantity, config, eta, curve=curve,
                                  mimo=mimo, workers=workers)
    gap = heavy.samples - heavy.paired_analytic
    gap_se = float(gap.std(ddof=1) / math.sqrt(gap.size))
    cheap_cfg = replace(config, n_geometries=n_cheap,
                        seed=config.seed + 104729)
    cheap = estimate_distribution("C_analytic_of_rho", cheap_cfg, eta,
                                  curve=curve, workers=workers)
    value = cheap.mean.value + float(gap.mean())
    se = math.hypot(cheap.mean.std_error, gap_se)
    return EstimateWithError(value, se, config.n_geometries)


def cv_mean_c_exact(config: SimConfig, eta: float, curve: SeCurve,
                    mimo: MimoConfig | None = None, n_cheap: int = 200_000,
                    workers: int | None = None) -> EstimateWithError:
    """Control-variate spatial mean of the exact mutual information."""
    return cv_spatial_mean("C_exact", config, eta, curve, mimo, n_cheap,
                           workers)
