"""Random-matrix reference laws for activation covariance spectra.

Closed-form Marchenko-Pastur and Wigner densities, numerically inverted MP
quantiles, noise-variance estimation by quantile init plus histogram matching,
the BBP detachment threshold, and Tracy-Widom edge statistics backed by a
bundled Monte-Carlo CDF table.

Conventions:
    * Spectra come from sample covariances C = (1/n) X^T X of n x d data.
    * The aspect ratio is q = d / n. For q > 1 only the min(n, d) potentially
      nonzero eigenvalues are analyzed and the continuous MP component (total
      mass 1/q) is used; the point mass at zero is never included.
    * All functions are pure; values are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

__all__ = [
    "MpParams",
    "EigenSpectrum",
    "TwStandardization",
    "mp_support",
    "mp_density",
    "mp_cdf",
    "mp_quantile",
    "estimate_sigma2_quantile",
    "estimate_sigma2_mean",
    "fit_sigma2",
    "bbp_threshold",
    "wigner_density",
    "tw_scaling",
    "tw_standardize",
    "tw_tail_probability",
    "load_tw_table",
]

# Quadrature nodes for the MP CDF/quantile grid. The contract requires >= 512;
# 2048 keeps the interpolation error well below the 1e-6 round-trip tolerance.
_MP_GRID_NODES = 2048

# Eigenvalues this far (relative to the largest) below zero are treated as
# numerical noise from the eigensolver and clamped to zero.
_EIG_CLAMP_REL = 1e-10


def mp_support(sigma2: float, q: float) -> tuple[float, float]:
    """Bulk support edges lambda_minus, lambda_plus = sigma2 * (1 -+ sqrt(q))^2.

    Args:
        sigma2: Noise variance of the matrix entries (must be > 0).
        q: Aspect ratio d/n (must be > 0).

    Returns:
        (lambda_minus, lambda_plus).
    """
    if not (np.isfinite(sigma2) and sigma2 > 0):
        raise ValueError(f"sigma2 must be positive and finite, got {sigma2}")
    if not (np.isfinite(q) and q > 0):
        raise ValueError(f"q must be positive and finite, got {q}")
    sq = np.sqrt(q)
    return sigma2 * (1.0 - sq) ** 2, sigma2 * (1.0 + sq) ** 2


@dataclass(frozen=True)
class MpParams:
    """Marchenko-Pastur parameters: noise variance and aspect ratio.

    The support edges are always recomputed from (sigma2, q) so they can
    never be stored inconsistently.
    """

    sigma2: float
    q: float

    def __post_init__(self) -> None:
        mp_support(self.sigma2, self.q)  # validates both fields

    @property
    def lambda_minus(self) -> float:
        return mp_support(self.sigma2, self.q)[0]

    @property
    def lambda_plus(self) -> float:
        return mp_support(self.sigma2, self.q)[1]


@dataclass
class EigenSpectrum:
    """Descending eigenvalues of a covariance, with originating dimensions.

    Stores only the min(n_samples, d_features) potentially nonzero values.
    Tiny negative values produced by finite-precision eigensolvers (within
    1e-10 of the leading eigenvalue) are clamped to zero; anything more
    negative is rejected.
    """

    values: np.ndarray
    n_samples: int
    d_features: int

    def __post_init__(self) -> None:
        vals = np.sort(np.asarray(self.values, dtype=np.float64))[::-1].copy()
        if vals.size == 0:
            raise ValueError("spectrum must contain at least one eigenvalue")
        if not np.all(np.isfinite(vals)):
            raise ValueError("spectrum contains non-finite eigenvalues")
        expected = min(self.n_samples, self.d_features)
        if vals.size != expected:
            raise ValueError(
                f"expected min(n_samples, d_features) = {expected} eigenvalues, got {vals.size}"
            )
        tol = _EIG_CLAMP_REL * max(vals[0], 0.0)
        if vals[-1] < -tol:
            raise ValueError(
                f"eigenvalue {vals[-1]} is more negative than the clamping tolerance {-tol}"
            )
        np.clip(vals, 0.0, None, out=vals)
        self.values = vals

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def trace(self) -> float:
        return float(self.values.sum())

    @classmethod
    def from_covariance(cls, cov: np.ndarray, n_samples: int) -> "EigenSpectrum":
        """Spectrum of a symmetric covariance, truncated to its nonzero part."""
        cov = np.asarray(cov, dtype=np.float64)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError(f"covariance must be square, got shape {cov.shape}")
        d = cov.shape[0]
        w = np.linalg.eigvalsh((cov + cov.T) / 2.0)[::-1]
        return cls(values=w[: min(n_samples, d)], n_samples=n_samples, d_features=d)


@dataclass(frozen=True)
class TwStandardization:
    """Centering and scaling for the largest-eigenvalue edge fluctuation."""

    center: float
    scale: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"scale must be positive, got {self.scale}")


def mp_density(lam, params: MpParams):
    """Continuous Marchenko-Pastur density at ``lam``.

    rho(lam) = sqrt((lambda_plus - lam)(lam - lambda_minus)) / (2 pi sigma2 q lam)
    on (lambda_minus, lambda_plus) intersected with (0, inf), and 0 elsewhere.
    For q > 1 the point mass 1 - 1/q at zero is NOT included, so the density
    integrates to min(1, 1/q).

    Accepts scalars or arrays; returns the same shape.
    """
    lam_arr = np.asarray(lam, dtype=np.float64)
    if not np.all(np.isfinite(lam_arr)):
        raise ValueError("lambda must be finite")
    lm, lp = params.lambda_minus, params.lambda_plus
    inside = (lam_arr > lm) & (lam_arr < lp) & (lam_arr > 0.0)
    out = np.zeros_like(lam_arr, dtype=np.float64)
    lv = lam_arr[inside]
    out[inside] = np.sqrt((lp - lv) * (lv - lm)) / (2.0 * np.pi * params.sigma2 * params.q * lv)
    if np.isscalar(lam) or lam_arr.ndim == 0:
        return float(out)
    return out


@lru_cache(maxsize=64)
def _mp_grid(sigma2: float, q: float, nodes: int = _MP_GRID_NODES):
    """Eigenvalue grid and normalized bulk CDF via the sin^2 substitution.

    Substituting lam = lm + (lp - lm) sin^2(phi) removes the square-root edge
    singularities (and the 1/lam singularity when lm = 0), so a trapezoid rule
    on a uniform phi grid converges fast.
    """
    lm, lp = mp_support(sigma2, q)
    phi = np.linspace(0.0, np.pi / 2.0, nodes)
    sin2 = np.sin(phi) ** 2
    lam = lm + (lp - lm) * sin2
    core = 2.0 * (np.sin(phi) * np.cos(phi)) ** 2 * (lp - lm) ** 2 / (2.0 * np.pi * sigma2 * q)
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = np.where(lam > 0.0, core / lam, 0.0)
    if lm == 0.0:
        dens[0] = lp / (np.pi * sigma2 * q)  # limit of core/lam as phi -> 0
    # cumulative trapezoid over phi
    increments = 0.5 * (dens[1:] + dens[:-1]) * np.diff(phi)
    cdf = np.concatenate([[0.0], np.cumsum(increments)])
    cdf /= cdf[-1]  # condition on the continuous bulk (mass 1/q when q > 1)
    lam.setflags(write=False)
    cdf.setflags(write=False)
    return lam, cdf


def mp_cdf(lam, params: MpParams):
    """CDF of the continuous MP part, conditioned on the bulk when q > 1."""
    lam_arr = np.asarray(lam, dtype=np.float64)
    if not np.all(np.isfinite(lam_arr)):
        raise ValueError("lambda must be finite")
    grid_lam, grid_cdf = _mp_grid(params.sigma2, params.q)
    out = np.interp(lam_arr, grid_lam, grid_cdf, left=0.0, right=1.0)
    if np.isscalar(lam) or lam_arr.ndim == 0:
        return float(out)
    return out


def mp_quantile(p, params: MpParams):
    """Inverse of :func:`mp_cdf`: the bulk eigenvalue at probability level p.

    Computed by numeric integration of the density on a fixed grid
    (>= 512 nodes) followed by monotone (piecewise-linear) interpolation.
    p = 0 maps to lambda_minus and p = 1 to lambda_plus.
    """
    p_arr = np.asarray(p, dtype=np.float64)
    if not np.all(np.isfinite(p_arr)) or np.any(p_arr < 0.0) or np.any(p_arr > 1.0):
        raise ValueError("probability levels must lie in [0, 1]")
    grid_lam, grid_cdf = _mp_grid(params.sigma2, params.q)
    out = np.interp(p_arr, grid_cdf, grid_lam)
    if np.isscalar(p) or p_arr.ndim == 0:
        return float(out)
    return out


def estimate_sigma2_quantile(spectrum: EigenSpectrum, tau: float = 0.5) -> float:
    """Noise-variance initializer: the tau-quantile of the eigenvalues.

    Linear interpolation between order statistics; tau = 0.5 (the median
    eigenvalue) is the robust default.
    """
    if not (0.0 <= tau <= 1.0):
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    if len(spectrum) == 0:
        raise ValueError("spectrum is empty")
    return float(np.quantile(spectrum.values, tau))


def estimate_sigma2_mean(spectrum: EigenSpectrum) -> float:
    """Mean-eigenvalue noise-variance estimate (asymptotically unbiased,
    but pulled upward by spike outliers; prefer the median under spikes)."""
    if len(spectrum) == 0:
        raise ValueError("spectrum is empty")
    return float(np.mean(spectrum.values))


def _golden_section(f, lo: float, hi: float, rel_tol: float = 1e-4):
    """Deterministic bounded golden-section minimizer; returns (x, f(x))."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    best_x, best_f = (x1, f1) if f1 <= f2 else (x2, f2)
    while (b - a) > rel_tol * max(abs(a), abs(b)):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
        if f1 < best_f:
            best_x, best_f = x1, f1
        if f2 < best_f:
            best_x, best_f = x2, f2
    return best_x, best_f


def fit_sigma2(
    spectrum: EigenSpectrum,
    q: float,
    sigma2_init: float,
    bins: int = 64,
) -> MpParams:
    """Refine the noise variance by L2 histogram matching against the MP density.

    The empirical spectrum is histogrammed (as a density) over
    [0, 1.1 * max(lambda_1, lambda_plus(sigma2_init))] and the squared error
    to the MP density at the bin centers is minimized by golden-section search
    over sigma2 in [sigma2_init / 4, 4 * sigma2_init] (relative tolerance 1e-4).

    Args:
        spectrum: Observed eigenvalues (non-empty, not all zero).
        q: Aspect ratio d/n to hold fixed during the fit.
        sigma2_init: Positive starting value, typically a spectrum quantile.
        bins: Histogram resolution, at least 16.

    Returns:
        MpParams with the fitted sigma2 and the given q.
    """
    if bins < 16:
        raise ValueError(f"bins must be >= 16, got {bins}")
    if len(spectrum) == 0:
        raise ValueError("spectrum is empty")
    if spectrum.values[0] <= 0.0:
        raise ValueError("degenerate spectrum: all eigenvalues are zero")
    if not (np.isfinite(sigma2_init) and sigma2_init > 0):
        raise ValueError(f"sigma2_init must be positive, got {sigma2_init}")

    _, lp_init = mp_support(sigma2_init, q)
    hi = 1.1 * max(float(spectrum.values[0]), lp_init)
    edges = np.linspace(0.0, hi, bins + 1)
    emp_density, _ = np.histogram(spectrum.values, bins=edges, density=True)
    centers = 0.5 * (edges[:-1] + edges[1:])

    def objective(sigma2: float) -> float:
        return float(np.sum((emp_density - mp_density(centers, MpParams(sigma2, q))) ** 2))

    best_x, best_f = _golden_section(objective, sigma2_init / 4.0, 4.0 * sigma2_init)
    # the minimizer must never be worse than the starting point
    if objective(sigma2_init) < best_f:
        best_x = sigma2_init
    return MpParams(sigma2=float(best_x), q=float(q))


def bbp_threshold(sigma2: float, c: float) -> float:
    """Critical spike strength sigma2 * (1 + sqrt(c)) above which a population
    spike detaches a sample eigenvalue from the bulk."""
    if not (np.isfinite(sigma2) and sigma2 > 0):
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    if not (np.isfinite(c) and c > 0):
        raise ValueError(f"c must be positive, got {c}")
    return sigma2 * (1.0 + np.sqrt(c))


def wigner_density(lam, sigma2: float):
    """Semicircle density (1 / 2 pi sigma2) sqrt(4 sigma2 - lam^2) on |lam| <= 2 sigma."""
    if not (np.isfinite(sigma2) and sigma2 > 0):
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    lam_arr = np.asarray(lam, dtype=np.float64)
    if not np.all(np.isfinite(lam_arr)):
        raise ValueError("lambda must be finite")
    out = np.zeros_like(lam_arr, dtype=np.float64)
    inside = np.abs(lam_arr) <= 2.0 * np.sqrt(sigma2)
    out[inside] = np.sqrt(4.0 * sigma2 - lam_arr[inside] ** 2) / (2.0 * np.pi * sigma2)
    if np.isscalar(lam) or lam_arr.ndim == 0:
        return float(out)
    return out


def tw_scaling(params: MpParams, n_samples: int) -> TwStandardization:
    """Edge centering/scale for the largest eigenvalue of an n-sample covariance.

    Uses the real-Wishart soft-edge scaling
    scale = sigma2 * n^(-2/3) * (1 + sqrt(q)) * (1 + 1/sqrt(q))^(1/3),
    centered at lambda_plus.
    """
    if n_samples < 2:
        raise ValueError(f"n_samples must be >= 2, got {n_samples}")
    sq = np.sqrt(params.q)
    scale = params.sigma2 * n_samples ** (-2.0 / 3.0) * (1.0 + sq) * (1.0 + 1.0 / sq) ** (1.0 / 3.0)
    return TwStandardization(center=params.lambda_plus, scale=float(scale))


def tw_standardize(lambda1: float, params: MpParams, n_samples: int) -> float:
    """Standardized edge fluctuation s = (lambda_1 - lambda_plus) / scale."""
    std = tw_scaling(params, n_samples)
    return float((lambda1 - std.center) / std.scale)


_DEFAULT_TW_TABLE: tuple[np.ndarray, np.ndarray] | None = None


def load_tw_table(path: str | Path | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Load a two-column (s, F1(s)) Tracy-Widom beta=1 CDF node table.

    ``path=None`` loads the bundled table (Monte-Carlo largest-eigenvalue draws
    of a 400 x 400 Gaussian covariance; see tools/make_tw_table.py). Lines
    starting with '#' are comments. Both columns must be monotone.
    """
    if path is None:
        with resources.files("rmtkit.data").joinpath("tw_cdf_beta1.txt").open("r") as fh:
            raw = np.loadtxt(fh)
    else:
        raw = np.loadtxt(path)
    if raw.ndim != 2 or raw.shape[1] != 2 or raw.shape[0] < 2:
        raise ValueError("TW table must have two columns and at least two rows")
    s, f = raw[:, 0], raw[:, 1]
    if np.any(np.diff(s) <= 0):
        raise ValueError("TW table s-column must be strictly increasing")
    if np.any(np.diff(f) < 0) or f[0] < 0.0 or f[-1] > 1.0:
        raise ValueError("TW table F-column must be a nondecreasing CDF in [0, 1]")
    return s, f


def tw_tail_probability(s: float, table: tuple[np.ndarray, np.ndarray] | None = None) -> float:
    """Upper tail 1 - F1(s) of the standardized largest-eigenvalue fluctuation.

    Monotone interpolation on the node table; clamps to 1 below the table
    range and 0 above it.
    """
    if not np.isfinite(s):
        raise ValueError(f"s must be finite, got {s}")
    global _DEFAULT_TW_TABLE
    if table is None:
        if _DEFAULT_TW_TABLE is None:
            _DEFAULT_TW_TABLE = load_tw_table()
        table = _DEFAULT_TW_TABLE
    nodes, cdf = table
    return float(1.0 - np.interp(s, nodes, cdf, left=0.0, right=1.0))
