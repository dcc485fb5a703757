"""Monte Carlo dropout inference and credible-interval machinery.

T stochastic forward passes (fresh timestep-constant masks each pass) give a
per-coordinate predictive mean and sample standard deviation. Bands are
mu +- z*sigma with z the two-sided standard-normal quantile; coverage counts
how often truths land inside. A from-scratch omnibus normality test (skew and
kurtosis transforms combined into K^2, chi-square with 2 dof) diagnoses how
Gaussian the pass distribution looks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .lstm import ModelParams, forward, sample_masks
from .storm_data import Sample, Scaler, apply_minmax

COVERAGE_COORDS = ("lat", "lon")
DEFAULT_LEVELS = (67.0, 90.0, 95.0, 98.0, 99.0)
MIN_NORMALITY_N = 20


@dataclass
class PredictionEnsemble:
    """T stochastic passes over one sample, with their mean and spread."""

    sample_id: str
    predictions: np.ndarray   # [T x 2] normalized (lat, lon)
    mu: np.ndarray            # per-coordinate mean, [2]
    sigma: np.ndarray         # per-coordinate sample std (ddof=1), [2]

    @property
    def n_passes(self) -> int:
        return self.predictions.shape[0]

    def __post_init__(self):
        self.predictions = np.asarray(self.predictions, dtype=np.float64)
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        if self.predictions.ndim != 2 or self.predictions.shape[1] != 2:
            raise ValidationError("predictions must be a [T x 2] matrix")
        if self.n_passes < 2:
            raise ValidationError(
                f"need at least 2 passes for a spread, got {self.n_passes}")
        if np.any(self.sigma < 0.0):
            raise ValidationError("sigma must be nonnegative")

    @classmethod
    def from_predictions(cls, sample_id: str,
                         predictions: np.ndarray) -> "PredictionEnsemble":
        preds = np.asarray(predictions, dtype=np.float64)
        if preds.ndim != 2 or preds.shape[1] != 2 or preds.shape[0] < 2:
            raise ValidationError("predictions must be a [T x 2] matrix, T >= 2")
        mu = preds.mean(axis=0)
        sigma = preds.std(axis=0, ddof=1)
        # constant columns get their exact value, not summation-order dust
        constant = np.ptp(preds, axis=0) == 0.0
        mu[constant] = preds[0, constant]
        sigma[constant] = 0.0
        return cls(sample_id=sample_id, predictions=preds, mu=mu, sigma=sigma)


@dataclass
class CredibleBand:
    """Two-sided interval mu +- z*sigma per coordinate at one level."""

    level: float
    z: float
    lower: np.ndarray  # [2]
    upper: np.ndarray  # [2]

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        if np.any(self.lower > self.upper):
            raise ValidationError("band has lower > upper")


@dataclass
class CoverageReport:
    """Percent of truths inside the band, per coordinate and level."""

    percents: dict[str, dict[float, float]]
    n: int

    def percent(self, coordinate: str, level: float) -> float:
        return self.percents[coordinate][float(level)]

    def to_csv_text(self) -> str:
        lines = ["coordinate,level,percent,n"]
        for coord in COVERAGE_COORDS:
            for level in sorted(self.percents[coord]):
                lines.append(
                    f"{coord},{level:g},{self.percents[coord][level]!r},"
                    f"{self.n}")
        return "\n".join(lines) + "\n"


def mc_predict(params: ModelParams, sample: Sample, n_passes: int,
               p_input: float, p_recurrent: float,
               seed) -> PredictionEnsemble:
    """Run n_passes stochastic forwards; fresh masks per pass, seeded."""
    if n_passes < 2:
        raise ValidationError(f"n_passes must be >= 2, got {n_passes}")
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)
    preds = np.empty((n_passes, 2))
    for t in range(n_passes):
        masks = sample_masks(rng, p_input, p_recurrent, params)
        preds[t] = forward(sample, params, masks)
    sample_id = getattr(sample, "storm_id", "")
    return PredictionEnsemble.from_predictions(sample_id, preds)


def _skew_transform(g1: float, n: int) -> float:
    """Normalizing transform of sample skewness (D'Agostino)."""
    y = g1 * math.sqrt((n + 1.0) * (n + 3.0) / (6.0 * (n - 2.0)))
    beta2 = (3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0)
             / ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0)))
    w2 = -1.0 + math.sqrt(2.0 * (beta2 - 1.0))
    delta = 1.0 / math.sqrt(math.log(math.sqrt(w2)))
    alpha = math.sqrt(2.0 / (w2 - 1.0))
    t = y / alpha
    return delta * math.log(t + math.sqrt(t * t + 1.0))


def _kurtosis_transform(b2: float, n: int) -> float:
    """Normalizing transform of sample kurtosis (Anscombe-Glynn)."""
    e = 3.0 * (n - 1.0) / (n + 1.0)
    var = (24.0 * n * (n - 2.0) * (n - 3.0)
           / ((n + 1.0) ** 2 * (n + 3.0) * (n + 5.0)))
    x = (b2 - e) / math.sqrt(var)
    sqrt_beta1 = (6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0))
                  * math.sqrt(6.0 * (n + 3.0) * (n + 5.0)
                              / (n * (n - 2.0) * (n - 3.0))))
    a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1
                                  + math.sqrt(1.0 + 4.0 / sqrt_beta1 ** 2))
    denom = 1.0 + x * math.sqrt(2.0 / (a - 4.0))
    # cbrt keeps the sign when heavy left tails push denom negative
    term = float(np.cbrt((1.0 - 2.0 / a) / denom))
    return (1.0 - 2.0 / (9.0 * a) - term) / math.sqrt(2.0 / (9.0 * a))


def dagostino_k2(values) -> tuple[float, float]:
    """Omnibus normality statistic K^2 and its chi-square(2) p-value."""
    x = np.asarray(values, dtype=np.float64).ravel()
    n = x.size
    if n < MIN_NORMALITY_N:
        raise ValidationError(
            f"normality test needs n >= {MIN_NORMALITY_N}, got {n}")
    centered = x - x.mean()
    m2 = float(np.mean(centered ** 2))
    if m2 == 0.0:
        raise ValidationError("normality test undefined for zero variance")
    m3 = float(np.mean(centered ** 3))
    m4 = float(np.mean(centered ** 4))
    g1 = m3 / m2 ** 1.5
    b2 = m4 / (m2 * m2)
    z1 = _skew_transform(g1, n)
    z2 = _kurtosis_transform(b2, n)
    k2 = z1 * z1 + z2 * z2
    return k2, math.exp(-k2 / 2.0)


# Coefficients of the rational approximation to the standard-normal inverse
# CDF (relative error < 1.2e-9 over the full domain).
_ICDF_A = (-3.969683028665376e+01, 2.209460984245205e+02,
           -2.759285104469687e+02, 1.383577518672690e+02,
           -3.066479806614716e+01, 2.506628277459239e+00)
_ICDF_B = (-5.447609879822406e+01, 1.615858368580409e+02,
           -1.556989798598866e+02, 6.680131188771972e+01,
           -1.328068155288572e+01)
_ICDF_C = (-7.784894002430293e-03, -3.223964580411365e-01,
           -2.400758277161838e+00, -2.549732539343734e+00,
           4.374664141464968e+00, 2.938163982698783e+00)
_ICDF_D = (7.784695709041462e-03, 3.224671290700398e-01,
           2.445134137142996e+00, 3.754408661907416e+00)
_ICDF_P_LOW = 0.02425


def _norm_ppf(p: float) -> float:
    """Standard-normal quantile via the rational approximation."""
    if not 0.0 < p < 1.0:
        raise ValidationError(f"quantile argument must be in (0, 1), got {p}")
    a, b, c, d = _ICDF_A, _ICDF_B, _ICDF_C, _ICDF_D
    if p < _ICDF_P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return ((((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q
                 + c[5])
                / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0))
    if p <= 1.0 - _ICDF_P_LOW:
        q = p - 0.5
        r = q * q
        return ((((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r
                 + a[5]) * q
                / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r
                   + 1.0))
    q = math.sqrt(-2.0 * math.log(1.0 - p))
    return -((((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q
              + c[5])
             / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0))


def z_for_level(level: float) -> float:
    """Two-sided standard-normal quantile for a central credible level."""
    if not 0.0 < level < 100.0:
        raise ValidationError(f"level must be in (0, 100), got {level}")
    return _norm_ppf((1.0 + level / 100.0) / 2.0)


def credible_band(ensemble: PredictionEnsemble, level: float) -> CredibleBand:
    """Normalized-unit band mu +- z*sigma at the given level."""
    z = z_for_level(level)
    return CredibleBand(level=float(level), z=z,
                        lower=ensemble.mu - z * ensemble.sigma,
                        upper=ensemble.mu + z * ensemble.sigma)


def band_to_degrees(band: CredibleBand, scaler: Scaler) -> CredibleBand:
    """The same band mapped through the inverse (lat, lon) scaler."""
    sub = scaler.latlon()
    return CredibleBand(level=band.level, z=band.z,
                        lower=apply_minmax(sub, band.lower, invert=True),
                        upper=apply_minmax(sub, band.upper, invert=True))


def coverage(bands, truths) -> CoverageReport:
    """Fraction of truths inside the closed bands, per coordinate and level.

    bands: per truth, either one CredibleBand or a list of them (one per
    level); every truth must carry the same set of levels.
    """
    if len(bands) == 0:
        raise ValidationError("coverage needs at least one band/truth pair")
    if len(bands) != len(truths):
        raise ValidationError(
            f"{len(bands)} band entries vs {len(truths)} truths")
    per_point = [[entry] if isinstance(entry, CredibleBand) else list(entry)
                 for entry in bands]
    levels = sorted({band.level for band in per_point[0]})
    for entry in per_point:
        if sorted({band.level for band in entry}) != levels:
            raise ValidationError("inconsistent levels across timesteps")

    n = len(truths)
    hits = {coord: {level: 0 for level in levels}
            for coord in COVERAGE_COORDS}
    for entry, truth in zip(per_point, truths):
        t = np.asarray(truth, dtype=np.float64)
        for band in entry:
            for j, coord in enumerate(COVERAGE_COORDS):
                if band.lower[j] <= t[j] <= band.upper[j]:
                    hits[coord][band.level] += 1
    percents = {coord: {level: 100.0 * hits[coord][level] / n
                        for level in levels}
                for coord in COVERAGE_COORDS}
    return CoverageReport(percents=percents, n=n)
