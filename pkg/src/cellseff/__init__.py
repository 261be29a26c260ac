"""Ergodic spectral efficiency of interference-limited Poisson cellular
networks: analytic SIR / SE distributions, spatial averages, coverage, MIMO
and sectorization, with Monte-Carlo baselines for validation."""

from .quadrature import QuadratureSpec, ToleranceError, integrate
from .special import (erf, exp_integral_en, gamma_star_series, gauss_2f1,
                      kummer_1f1, lower_gamma, lower_gamma_continued,
                      sinc_norm)
from .sirdist import (FOUR_BRANCH, THREE_BRANCH, PathModel, SectorModel,
                      b_delta, sector_sir_cdf, shifted_sir_cdf, sir_cdf,
                      sir_pdf, sir_quantile, solve_s_star)
from .seff import (LognormalFit, MimoConfig, SeCurve, c_mimo,
                   c_mimo_2x2_approx, c_siso, c_siso_approx, coverage_quantile,
                   coverage_tail, curve_from_key, inst_coverage_se_eta4,
                   inst_sir_cdf_eta4, lognormal_fit, mean_se,
                   mean_se_2x2_closed_eta4, mean_se_cub, mean_se_general,
                   mimo_2x2_approx_curve, mimo_curve, rho_from_c,
                   se_cdf, se_quantile, siso_approx_curve, siso_exact_curve)
from .montecarlo import (BudgetError, DistributionEstimate, EstimateWithError,
                         GeometrySample, SimConfig, apply_shadowing,
                         build_lattice, c_exact_mimo, c_exact_siso,
                         c_ub_mimo_mc, c_ub_realization, cv_mean_c_exact,
                         cv_spatial_mean, estimate_distribution,
                         expected_kth_distance, fig1_sample, ks_distance,
                         local_avg_sir, rho_samples, sample_ppp, substream)

__version__ = "0.1.0"
