"""Spectral descriptors of an activation window.

An N x D window of streamed activations is summarized by a fixed 22-slot
vector built from the eigenvalues of its covariance: variance concentration,
entropy, divergences from the fitted Marchenko-Pastur baseline, edge
statistics, gap ratios, and shape moments. The slot registry is versioned in
``data/feature_schema_v1.json``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .laws import (
    EigenSpectrum,
    MpParams,
    estimate_sigma2_quantile,
    fit_sigma2,
    mp_cdf,
    mp_quantile,
    tw_standardize,
    tw_tail_probability,
)

__all__ = [
    "ActivationWindow",
    "FeatureVector",
    "FEATURE_COUNT",
    "SCHEMA_VERSION",
    "SLOT_NAMES",
    "GAP_RATIO_CAP",
    "eigenspectrum",
    "leading_sum",
    "spectral_entropy",
    "kl_to_mp",
    "wasserstein_to_mp",
    "gap_ratios",
    "spectral_moments",
    "descriptor_vector",
]

FEATURE_COUNT = 22
SCHEMA_VERSION = 1

# Ratio slots are reported on a log scale and capped so rank-deficient windows
# stay finite; the raw cap is 1e6, i.e. log cap = log(1e6).
GAP_RATIO_CAP = 1e6

# Slot registry, version 1. Slots 1-5 are the top eigenvalues normalized by
# the trace; slot 20 repeats the top share by definition of the registry.
SLOT_NAMES = (
    "top1_frac",
    "top2_frac",
    "top3_frac",
    "top4_frac",
    "top5_frac",
    "leading_sum_5",
    "entropy",
    "entropy_normalized",
    "kl_to_mp",
    "wasserstein_to_mp",
    "tw_tail_top",
    "log_gap_1",
    "log_gap_2",
    "log_gap_3",
    "skewness",
    "excess_kurtosis",
    "trace",
    "effective_rank",
    "frac_above_edge",
    "top1_share",
    "median_eigenvalue",
    "fitted_sigma2",
)

SLOT_UNITS = (
    "dimensionless",
    "dimensionless",
    "dimensionless",
    "dimensionless",
    "dimensionless",
    "activation_units_sq",
    "nats",
    "dimensionless",
    "nats",
    "activation_units_sq",
    "probability",
    "log_ratio",
    "log_ratio",
    "log_ratio",
    "dimensionless",
    "dimensionless",
    "activation_units_sq",
    "dimensionless",
    "dimensionless",
    "dimensionless",
    "activation_units_sq",
    "activation_units_sq",
)


@dataclass
class ActivationWindow:
    """N x D block of streamed activations (rows are time steps)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"window must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 2 or arr.shape[1] < 2:
            raise ValueError(f"window must be at least 2 x 2, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("window contains non-finite entries")
        self.data = arr

    @property
    def n_steps(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass
class FeatureVector:
    """One 22-slot descriptor vector tagged with its window index."""

    values: np.ndarray
    window_index: int = 0

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.shape != (FEATURE_COUNT,):
            raise ValueError(f"expected {FEATURE_COUNT} feature slots, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature vector contains non-finite entries")
        self.values = arr

    def as_dict(self) -> dict[str, float]:
        return {name: float(v) for name, v in zip(SLOT_NAMES, self.values)}


def eigenspectrum(window: ActivationWindow) -> EigenSpectrum:
    """Eigenvalues of the window covariance (1/N) H^T H via SVD.

    Returns sigma_i^2 / N for the min(N, D) singular values of H, descending.
    """
    h = window.data
    n = window.n_steps
    svals = np.linalg.svd(h, compute_uv=False)
    return EigenSpectrum(values=svals**2 / n, n_samples=n, d_features=window.width)


def leading_sum(spectrum: EigenSpectrum, k: int = 5) -> float:
    """Sum of the top-k eigenvalues (all of them when k exceeds the length)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return float(spectrum.values[: min(k, len(spectrum))].sum())


def spectral_entropy(spectrum: EigenSpectrum) -> float:
    """Shannon entropy (nats) of trace-normalized eigenvalues; 0 log 0 := 0."""
    trace = spectrum.trace
    if trace <= 0.0:
        raise ValueError("spectral entropy undefined for zero-trace spectrum")
    p = spectrum.values / trace
    nz = p[p > 0.0]
    return float(-np.sum(nz * np.log(nz)))


def _mp_bin_masses(params: MpParams, edges: np.ndarray) -> np.ndarray:
    """Probability mass of the (bulk-conditioned) MP law in each bin."""
    cdf = mp_cdf(edges, params)
    return np.diff(cdf)


def kl_to_mp(spectrum: EigenSpectrum, params: MpParams, bins: int = 64) -> float:
    """KL divergence of the eigenvalue histogram from the MP baseline.

    Both distributions are discretized onto the same bins over
    [0, 1.1 * max(lambda_1, lambda_plus)], smoothed by 1e-8 per bin,
    renormalized, and compared; the result is always >= 0.
    """
    if len(spectrum) == 0:
        raise ValueError("spectrum is empty")
    hi = 1.1 * max(float(spectrum.values[0]), params.lambda_plus)
    edges = np.linspace(0.0, hi, bins + 1)
    counts, _ = np.histogram(spectrum.values, bins=edges)
    p = counts / counts.sum() + 1e-8
    m = _mp_bin_masses(params, edges) + 1e-8
    p /= p.sum()
    m /= m.sum()
    return float(np.sum(p * np.log(p / m)))


def wasserstein_to_mp(spectrum: EigenSpectrum, params: MpParams) -> float:
    """W1 distance to the MP bulk by quantile coupling.

    (1/d) sum_i |lambda_(i) - mp_quantile((i - 0.5) / d)| over ascending
    eigenvalues.
    """
    d = len(spectrum)
    if d == 0:
        raise ValueError("spectrum is empty")
    ascending = spectrum.values[::-1]
    probs = (np.arange(d) + 0.5) / d
    return float(np.mean(np.abs(ascending - mp_quantile(probs, params))))


def gap_ratios(spectrum: EigenSpectrum, k: int) -> list[float]:
    """Consecutive eigenvalue ratios lambda_i / lambda_{i+1} for i = 1..k.

    Each ratio is >= 1 by the descending order. When the denominator is
    degenerate (<= 1e-12 * lambda_1) the slot takes the cap value 1e6 if the
    numerator is non-degenerate and 1.0 otherwise (equal-to-equal).
    Missing pairs beyond the spectrum length are padded the same way.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    vals = spectrum.values
    thr = 1e-12 * float(vals[0])
    out = []
    for i in range(k):
        num = float(vals[i]) if i < len(vals) else 0.0
        den = float(vals[i + 1]) if i + 1 < len(vals) else 0.0
        if den > thr:
            out.append(min(num / den, GAP_RATIO_CAP))
        elif num > thr:
            out.append(GAP_RATIO_CAP)
        else:
            out.append(1.0)
    return out


def spectral_moments(spectrum: EigenSpectrum) -> tuple[float, float, float, float]:
    """Population (mean, std, skewness, excess kurtosis) of the eigenvalues.

    Skewness and kurtosis are defined as 0 when the std is 0.
    """
    vals = spectrum.values
    mean = float(vals.mean())
    var = float(((vals - mean) ** 2).mean())
    std = float(np.sqrt(var))
    if std == 0.0:
        return mean, 0.0, 0.0, 0.0
    z = (vals - mean) / std
    skew = float((z**3).mean())
    kurt = float((z**4).mean() - 3.0)
    return mean, std, skew, kurt


def descriptor_vector(
    window: ActivationWindow,
    fit_bins: int = 64,
    window_index: int = 0,
    center: bool = False,
) -> FeatureVector:
    """Compute the full 22-slot descriptor for one window.

    The eigenspectrum is computed once; the MP baseline is refit per window
    with q = width / n_steps from the median-eigenvalue initializer. Rows are
    not mean-centered by default (streamed activations are treated as
    approximately mean-zero); pass ``center=True`` to subtract the column
    means first.
    """
    if center:
        window = ActivationWindow(window.data - window.data.mean(axis=0, keepdims=True))
    spec = eigenspectrum(window)
    vals = spec.values
    trace = spec.trace
    if trace <= 0.0:
        raise ValueError("descriptor undefined for an all-zero window")

    q = window.width / window.n_steps
    # Floor the initializer so rank-deficient spectra (median eigenvalue 0)
    # still produce a positive, fittable noise level.
    sigma2_init = max(estimate_sigma2_quantile(spec, 0.5), 1e-12 * float(vals[0]))
    params = fit_sigma2(spec, q, sigma2_init, bins=fit_bins)

    entropy = spectral_entropy(spec)
    max_entropy = np.log(min(window.n_steps, window.width))
    mean, std, skew, kurt = spectral_moments(spec)
    log_gaps = np.log(gap_ratios(spec, 3))
    s_edge = tw_standardize(float(vals[0]), params, window.n_steps)

    top5 = np.zeros(5)
    upto = min(5, len(spec))
    top5[:upto] = vals[:upto] / trace

    slots = np.empty(FEATURE_COUNT)
    slots[0:5] = top5
    slots[5] = leading_sum(spec, 5)
    slots[6] = entropy
    slots[7] = entropy / max_entropy
    slots[8] = kl_to_mp(spec, params, bins=fit_bins)
    slots[9] = wasserstein_to_mp(spec, params)
    slots[10] = tw_tail_probability(s_edge)
    slots[11:14] = log_gaps
    slots[14] = skew
    slots[15] = kurt
    slots[16] = trace
    slots[17] = np.exp(entropy)
    slots[18] = float(np.mean(vals > params.lambda_plus))
    slots[19] = vals[0] / trace
    slots[20] = float(np.median(vals))
    slots[21] = params.sigma2
    return FeatureVector(values=slots, window_index=window_index)
