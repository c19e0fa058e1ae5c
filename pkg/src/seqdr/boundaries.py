"""Confidence-sequence radii and tuning of the mixture parameter rho.

All radius computations used by the estimators live here: the normal
mixture boundary, the iterated-logarithm boundary, the boundary for
independent but non-identically-distributed streams, a per-coordinate
multivariate box, the fixed-time CI comparator, and the closed form of
the Gaussian mixture martingale (kept as a cross-check oracle).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import CovMoments, DomainError, lambert_w, psd_sqrt

__all__ = [
    "BoundarySpec",
    "CsPoint",
    "MartingaleState",
    "mixture_radius",
    "lil_radius",
    "non_iid_radius",
    "multivariate_cs",
    "tune_rho",
    "fixed_ci_radius",
    "mixture_martingale",
    "norm_quantile",
    "SQRT_OMEGA",
]

# Omega = W0(1); exact rho tuning is only defined for alpha <= sqrt(Omega).
OMEGA = lambert_w("principal", 1.0)
SQRT_OMEGA = math.sqrt(OMEGA)

_FAMILIES = ("normal_mixture", "lil", "non_iid")


@dataclass(frozen=True)
class BoundarySpec:
    """Confidence level, mixture scale rho, and boundary family."""

    alpha: float
    rho: float = 1.0
    family: str = "normal_mixture"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.rho > 0.0:
            raise DomainError(f"rho must be positive, got {self.rho}")
        if self.family not in _FAMILIES:
            raise DomainError(f"unknown boundary family: {self.family!r}")


@dataclass(frozen=True)
class CsPoint:
    """One emitted interval of a confidence sequence."""

    t: int
    estimate: float
    lower: float
    upper: float
    radius: float
    var_hat: float

    @classmethod
    def from_radius(cls, t, estimate, radius, var_hat) -> "CsPoint":
        return cls(
            t=int(t),
            estimate=float(estimate),
            lower=float(estimate - radius),
            upper=float(estimate + radius),
            radius=float(radius),
            var_hat=float(var_hat),
        )


@dataclass(frozen=True)
class MartingaleState:
    """Time index and cumulative Gaussian sum of the mixture martingale."""

    t: int = 0
    w: float = 0.0

    def __post_init__(self):
        if self.t < 0:
            raise DomainError("t must be nonnegative")
        if self.t == 0 and self.w != 0.0:
            raise DomainError("cumulative sum must be 0 at t = 0")

    def advance(self, g: float) -> "MartingaleState":
        return MartingaleState(self.t + 1, self.w + float(g))


def mixture_radius(t: int, sigma_hat: float, spec: BoundarySpec) -> float:
    """Normal mixture confidence-sequence radius at time t.

    radius = sigma_hat * sqrt( 2 (t rho^2 + 1) / (t^2 rho^2)
                               * log( sqrt(t rho^2 + 1) / alpha ) )
    """
    if t < 1:
        raise DomainError(f"t must be >= 1, got {t}")
    if sigma_hat < 0:
        raise DomainError("sigma_hat must be nonnegative")
    rho2 = spec.rho * spec.rho
    a = t * rho2 + 1.0
    return sigma_hat * math.sqrt(
        2.0 * a / (t * t * rho2) * math.log(math.sqrt(a) / spec.alpha)
    )


def lil_radius(t: int, sigma_hat: float, alpha: float) -> float:
    """Iterated-logarithm boundary: 1.7 sigma sqrt((loglog(2t) + 0.72 log(5.2/alpha)) / t)."""
    if t < 1:
        raise DomainError(f"t must be >= 1, got {t}")
    if sigma_hat < 0:
        raise DomainError("sigma_hat must be nonnegative")
    return (
        1.7
        * sigma_hat
        * math.sqrt(
            (math.log(math.log(2.0 * t)) + 0.72 * math.log(5.2 / alpha)) / t
        )
    )


def non_iid_radius(t: int, sigma_bar_sq_hat: float, spec: BoundarySpec) -> float:
    """Boundary for independent, non-identically-distributed streams.

    (1/t) * sqrt( 2 (t s^2 rho^2 + 1) / rho^2
                  * log( sqrt(t s^2 rho^2 + 1) / alpha ) )
    where s^2 is the running average of the per-observation variances.
    Reduces exactly to ``mixture_radius`` with sigma_hat = 1 when s^2 = 1.
    """
    if t < 1:
        raise DomainError(f"t must be >= 1, got {t}")
    if sigma_bar_sq_hat < 0:
        raise DomainError("sigma_bar_sq_hat must be nonnegative")
    rho2 = spec.rho * spec.rho
    a = t * sigma_bar_sq_hat * rho2 + 1.0
    # same arithmetic shape as mixture_radius so the s^2 = 1 reduction is
    # bit-exact
    return math.sqrt(2.0 * a / (t * t * rho2) * math.log(math.sqrt(a) / spec.alpha))


def multivariate_cs(
    cov: CovMoments, mean: np.ndarray, spec: BoundarySpec
) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned confidence box for a d-dimensional mean.

    Instantiates the abstract multivariate sequence as a per-coordinate
    normal mixture box at level alpha / d (union bound), then maps it
    through the PSD square root of the running covariance.

    Returns
    -------
    (lower, upper) : pair of length-d arrays
    """
    mean = np.asarray(mean, dtype=float)
    if cov.count < 2:
        raise DomainError("need at least two observations for a covariance")
    d = cov.dim
    if mean.shape != (d,):
        raise DomainError(f"mean has shape {mean.shape}, expected ({d},)")
    per_coord = BoundarySpec(spec.alpha / d, spec.rho, spec.family)
    r = np.full(d, mixture_radius(cov.count, 1.0, per_coord))
    root = psd_sqrt(cov.covariance()).entries
    half = np.abs(root) @ r
    return mean - half, mean + half


def tune_rho(alpha: float, t_star: int, method: str = "exact") -> float:
    """rho minimizing the normal mixture radius at time t_star.

    'exact' inverts the stationarity condition through the lower Lambert W
    branch and requires alpha <= sqrt(W0(1)) ~ 0.7531; 'approx' replaces
    the Lambert W value with its log-log expansion.
    """
    if t_star < 1:
        raise DomainError(f"t_star must be >= 1, got {t_star}")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    a2 = alpha * alpha
    if method == "exact":
        if alpha >= SQRT_OMEGA:
            raise DomainError(
                f"exact tuning requires alpha < sqrt(W0(1)) ~ {SQRT_OMEGA:.4f}"
            )
        # stationarity of the radius in rho^2: with u = t rho^2 + 1 the
        # minimizer solves u - 1 = log(u / alpha^2), i.e. u = -W_{-1}(-alpha^2 / e)
        z = -a2 * math.exp(-1.0)
        return math.sqrt((-lambert_w("lower", z) - 1.0) / t_star)
    if method == "approx":
        num = -a2 - 2.0 * math.log(alpha) + math.log(-2.0 * math.log(alpha) + 1.0 - a2)
        if num <= 0:
            raise DomainError("approximate tuning degenerates at this alpha")
        return math.sqrt(num / t_star)
    raise DomainError(f"unknown method: {method!r}")


# Coefficients of Acklam's rational approximation to the standard normal
# quantile (max abs error < 1.2e-9 before refinement).
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)


def norm_quantile(p: float) -> float:
    """Standard normal quantile by rational approximation plus one
    Halley refinement; absolute error well below 1e-8."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    p_low, p_high = 0.02425, 1.0 - 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
             / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    elif p <= p_high:
        q = p - 0.5
        r = q * q
        x = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
             / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
              / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    # one Halley step against the exact CDF
    e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(x * x / 2.0)
    return x - u / (1.0 + x * u / 2.0)


def fixed_ci_radius(t: int, sigma_hat: float, alpha: float) -> float:
    """Fixed-time CLT confidence interval radius, sigma * q_{alpha/2} / sqrt(t)."""
    if t < 1:
        raise DomainError(f"t must be >= 1, got {t}")
    if sigma_hat < 0:
        raise DomainError("sigma_hat must be nonnegative")
    return sigma_hat * norm_quantile(1.0 - alpha / 2.0) / math.sqrt(t)


def mixture_martingale(state: MartingaleState, rho: float) -> float:
    """Closed form of the Gaussian-mixture exponential martingale.

    M_t = exp( rho^2 W_t^2 / (2 (t rho^2 + 1)) ) / sqrt(t rho^2 + 1)
    with M_0 = 1. Equals the Gaussian mixture of exp(lambda W_t - t
    lambda^2 / 2) over lambda ~ N(0, rho^2).
    """
    if rho <= 0:
        raise DomainError(f"rho must be positive, got {rho}")
    rho2 = rho * rho
    a = state.t * rho2 + 1.0
    return math.exp(rho2 * state.w * state.w / (2.0 * a)) / math.sqrt(a)
