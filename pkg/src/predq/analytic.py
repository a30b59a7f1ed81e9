"""Closed-form and numerical evaluators for the exact queueing results.

Covers M/M/1 FIFO, the Pollaczek-Khinchine M/G/1 FIFO mean, and the 1-bit
two-class response-time formulas built from modified Bessel functions of the
second kind. Everything here is a pure function; instability is reported as
a typed error, never as infinity, so sweeps can tell "diverged" from "large".
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.integrate import quad
from scipy.optimize import minimize_scalar


class InstabilityError(ValueError):
    """The requested operating point has no finite steady state."""


@dataclass(frozen=True)
class AnalyticResult:
    mean_response: float
    formula: str
    params: dict

    def __float__(self):
        return float(self.mean_response)


def bessel_k(nu: int, x: float) -> float:
    """Modified Bessel function of the second kind, K_nu(x), for nu in {0,1,2}.

    Evaluated by adaptive quadrature of the integral representation
    K_nu(x) = integral_0^inf exp(-x cosh t) cosh(nu t) dt, which keeps the
    relative error near 1e-12 uniformly over the argument range the threshold
    sweeps need (2 sqrt(T) from about 0.1 to 20).
    """
    if x <= 0:
        raise ValueError(f"bessel_k requires x > 0, got {x}")
    if nu not in (0, 1, 2):
        raise ValueError(f"bessel_k supports orders 0, 1, 2, got {nu}")

    def integrand(t):
        # exp(-x cosh t) underflows for large t; cap the exponent instead of
        # letting exp overflow warnings leak out of quad.
        e = -x * math.cosh(t)
        if e < -745.0:
            return 0.0
        return math.exp(e) * math.cosh(nu * t)

    # The integrand is O(exp(-x e^t / 2)); beyond t* with x cosh t* > 750 it
    # is identically zero in double precision.
    t_hi = math.acosh(750.0 / x) if x < 750.0 else 1.0
    val, _ = quad(integrand, 0.0, t_hi, epsabs=1e-300, epsrel=1e-13, limit=400)
    return val


def mm1_fifo(lam: float) -> AnalyticResult:
    """Mean response of M/M/1 FIFO with mean-1 service: 1/(1-lambda)."""
    if lam <= 0:
        raise ValueError(f"arrival rate must be positive, got {lam}")
    if lam >= 1:
        raise InstabilityError(f"M/M/1 unstable at lambda={lam}")
    return AnalyticResult(1.0 / (1.0 - lam), "mm1_fifo", {"lam": lam})


def mg1_fifo_pk(lam: float, mean: float, second_moment: float) -> AnalyticResult:
    """Pollaczek-Khinchine mean response: E[S] + lam E[S^2] / (2 (1 - rho))."""
    if lam <= 0 or mean <= 0 or second_moment < mean * mean:
        raise ValueError("need lam > 0, mean > 0, second_moment >= mean^2")
    rho = lam * mean
    if rho >= 1:
        raise InstabilityError(f"M/G/1 unstable at rho={rho}")
    value = mean + lam * second_moment / (2.0 * (1.0 - rho))
    return AnalyticResult(
        value, "mg1_fifo_pk", {"lam": lam, "mean": mean, "second_moment": second_moment}
    )


def onebit_long_fraction(threshold: float) -> float:
    """P(classified Long) = 2 sqrt(T) K_1(2 sqrt(T)).

    Holds for mean-1 exponential service with exponential-mean predictions
    thresholded at T.
    """
    if threshold <= 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    s = 2.0 * math.sqrt(threshold)
    return s * bessel_k(1, s)


def _onebit_parts(lam: float, threshold: float):
    if lam <= 0 or lam >= 1:
        raise InstabilityError(f"two-class formulas need 0 < lambda < 1, got {lam}")
    if threshold <= 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    s = 2.0 * math.sqrt(threshold)
    k1 = bessel_k(1, s)
    k2 = bessel_k(2, s)
    denom = (1.0 - lam) * (1.0 - lam * (1.0 - 2.0 * threshold * k2))
    return s, k1, k2, denom


def onebit_t1(lam: float, threshold: float) -> AnalyticResult:
    """Mean response of the non-preemptive two-class policy (1-bit, M/M/1)."""
    s, k1, _, denom = _onebit_parts(lam, threshold)
    value = lam * (1.0 - lam * (1.0 - s * k1)) / denom + 1.0
    return AnalyticResult(value, "onebit_t1", {"lam": lam, "threshold": threshold})


def onebit_t2(lam: float, threshold: float) -> AnalyticResult:
    """Mean response of the preemptive two-class policy (1-bit, M/M/1)."""
    s, k1, _, denom = _onebit_parts(lam, threshold)
    value = (1.0 - lam + lam * s * k1) / denom
    return AnalyticResult(value, "onebit_t2", {"lam": lam, "threshold": threshold})


FORMULAS = {
    "mm1_fifo": mm1_fifo,
    "mg1_fifo_pk": mg1_fifo_pk,
    "onebit_t1": onebit_t1,
    "onebit_t2": onebit_t2,
    "bessel_k": bessel_k,
    "onebit_long_fraction": onebit_long_fraction,
}


def optimal_threshold(lam: float, which: str = "t2") -> tuple[float, float]:
    """Threshold minimizing the chosen two-class formula; returns (T*, value)."""
    fn = onebit_t2 if which == "t2" else onebit_t1
    res = minimize_scalar(
        lambda t: fn(lam, t).mean_response,
        bounds=(1e-3, 50.0),
        method="bounded",
        options={"xatol": 1e-8},
    )
    return float(res.x), float(res.fun)
