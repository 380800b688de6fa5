"""Upper tail probabilities of ``Q = sum_j lambda_j * chi2_1`` with weights of any sign."""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, stats

from .models import QuadFormError

logger = logging.getLogger(__name__)

P_MIN = 1e-12
PRUNE_TOL = 1e-12


@dataclass(frozen=True)
class QuadFormSpec:
    lambdas: np.ndarray
    x: float
    accuracy: float = 1e-6

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.lambdas, dtype=float))
        if lam.ndim != 1 or lam.size == 0:
            raise QuadFormError("lambdas must be a nonempty vector")
        if not np.all(np.isfinite(lam)):
            raise QuadFormError("lambdas must be finite")
        if not np.any(lam != 0):
            raise QuadFormError("all lambdas are zero")
        if not np.isfinite(self.x):
            raise QuadFormError("threshold must be finite")
        if self.accuracy <= 0:
            raise QuadFormError("accuracy must be positive")
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "x", float(self.x))

    def pruned(self) -> np.ndarray:
        lam = self.lambdas
        return lam[np.abs(lam) >= PRUNE_TOL * np.max(np.abs(lam))]


@dataclass(frozen=True)
class QuadFormResult:
    p_value: float
    method: str
    fallback: bool = False
    abserr: float = 0.0

    def __float__(self) -> float:
        return self.p_value

    def to_dict(self):
        return asdict(self)


def _clip(p: float) -> float:
    return float(min(1.0, max(P_MIN, p)))


def _imhof(lam: np.ndarray, x: float, epsabs: float, limit: int = 1000):
    """Imhof inversion: ``P(Q > x) = 1/2 + (1/pi) int_0^inf sin(theta(u)) / (u rho(u)) du``.

    The finite head is integrated adaptively; the oscillating tail is split
    into cosine/sine-weighted Fourier integrals.
    """
    omega = x / 2.0
    lam_max = float(np.max(np.abs(lam)))

    def phase(u):
        return 0.5 * np.sum(np.arctan(lam * u))

    def envelope(u):
        return u * np.exp(0.25 * np.sum(np.log1p((lam * u) ** 2)))

    def integrand(u):
        if u == 0.0:
            return 0.5 * (np.sum(lam) - x)
        return np.sin(phase(u) - omega * u) / envelope(u)

    head_end = 10.0 / lam_max
    head, err_head = integrate.quad(integrand, 0.0, head_end, epsabs=epsabs, limit=limit)

    w = abs(omega)
    if w == 0.0:
        tail, err_tail = integrate.quad(integrand, head_end, np.inf, epsabs=epsabs, limit=limit)
    else:
        sign = np.sign(omega)
        # sin(A - s*w*u) = sin(A) cos(w u) - s cos(A) sin(w u)
        cos_part, err_c = integrate.quad(lambda u: np.sin(phase(u)) / envelope(u),
                                         head_end, np.inf, weight="cos", wvar=w,
                                         epsabs=epsabs, limlst=200)
        sin_part, err_s = integrate.quad(lambda u: np.cos(phase(u)) / envelope(u),
                                         head_end, np.inf, weight="sin", wvar=w,
                                         epsabs=epsabs, limlst=200)
        tail = cos_part - sign * sin_part
        err_tail = err_c + err_s
    value = 0.5 + (head + tail) / np.pi
    return value, (err_head + err_tail) / np.pi


def davies_tail(spec: QuadFormSpec) -> QuadFormResult:
    """``P(Q >= x)`` by numerical inversion of the characteristic function.

    Falls back to :func:`moment_match_tail` when quadrature reports trouble
    or its error estimate exceeds the accuracy target.
    """
    lam = spec.pruned()
    x = spec.x
    if np.all(lam > 0) and x <= 0:
        return QuadFormResult(1.0, "exact")
    if np.all(lam < 0) and x >= 0:
        return QuadFormResult(P_MIN, "exact")
    if np.all(lam > 0) and np.allclose(lam, lam[0], rtol=1e-14, atol=0.0):
        return QuadFormResult(_clip(stats.chi2.sf(x / lam[0], lam.size)), "exact")

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        value, abserr = _imhof(lam, x, epsabs=0.1 * np.pi * spec.accuracy)
    warned = any(issubclass(w.category, integrate.IntegrationWarning) for w in caught)
    if not np.isfinite(value) or abserr > spec.accuracy or (warned and abserr > 0.1 * spec.accuracy):
        logger.warning(
            f"Imhof integration unreliable (abserr={abserr:.2e}, m={lam.size}); using moment matching"
        )
        fallback = moment_match_tail(spec)
        return QuadFormResult(fallback, "moment_match", fallback=True, abserr=abserr)
    return QuadFormResult(_clip(value), "imhof", abserr=abserr)


def moment_match_tail(spec: QuadFormSpec) -> float:
    """Approximate ``P(Q >= x)`` by matching cumulants of ``Q`` to a scaled
    noncentral chi-square (Liu-type three/four moment matching)."""
    lam = spec.pruned()
    x = spec.x
    c = [float(np.sum(lam ** r)) for r in (1, 2, 3, 4)]
    if c[1] <= 0:
        raise QuadFormError("degenerate variance in moment matching")
    if c[2] < 0:
        # mirror so the skewness is non-negative: P(Q >= x) = 1 - P(-Q >= -x)
        return _clip(1.0 - moment_match_tail(QuadFormSpec(-lam, -x, spec.accuracy)))

    s1 = c[2] / c[1] ** 1.5
    s2 = c[3] / c[1] ** 2
    t = (x - c[0]) / np.sqrt(2.0 * c[1])
    if s1 <= 1e-12:
        return _clip(stats.norm.sf(t))
    if s1 ** 2 > s2:
        a = 1.0 / (s1 - np.sqrt(s1 ** 2 - s2))
        delta = s1 * a ** 3 - a ** 2
        dof = a ** 2 - 2.0 * delta
    else:
        a = 1.0 / s1
        delta = 0.0
        dof = a ** 2
    threshold = t * np.sqrt(2.0) * a + dof + delta
    if delta > 0:
        p = stats.ncx2.sf(threshold, dof, delta)
    else:
        p = stats.chi2.sf(threshold, dof)
    return _clip(p)


def tail_probability(lambdas: Sequence[float], x: float, accuracy: float = 1e-6) -> QuadFormResult:
    return davies_tail(QuadFormSpec(np.asarray(lambdas, dtype=float), x, accuracy))
