"""Asymptotic null distribution of the residual score ``E1 @ M``.

Slope matrices of the score and estimating function are estimated by
least squares on random perturbations of ``beta_hat``; the covariance of
``E1 @ M`` then follows from the counting-process variance with the
plug-in correction for estimating ``beta``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from .aft_null import (
    NullFit,
    TransformedData,
    estimating_function,
    martingale_residuals,
    nelson_aalen,
)
from .models import Dataset, SlopeEstimationError

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e12
DEGENERATE_TOL = 1e-9
CHUNK_SIZE = 128


@dataclass(frozen=True, eq=False)
class SlopeEstimates:
    """``A_hat`` (q x q) and the residual slope (n x q) from which ``B_hat = E1 @ slope``."""

    A_hat: np.ndarray
    residual_slope: np.ndarray
    L: int
    L_tilde: int
    seed: Optional[int]
    condition: float = 1.0

    def B_for(self, E1: np.ndarray) -> np.ndarray:
        return np.asarray(E1) @ self.residual_slope

    def to_dict(self):
        return {
            "L": self.L,
            "L_tilde": self.L_tilde,
            "seed": self.seed,
            "condition": self.condition,
            "A_hat": self.A_hat.tolist(),
        }


@dataclass(frozen=True, eq=False)
class NullSpectrum:
    cov: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    degenerate: bool = False

    @property
    def m(self) -> int:
        return self.cov.shape[0]

    def sqrt(self) -> np.ndarray:
        """Symmetric square root of the covariance."""
        return (self.eigenvectors * np.sqrt(self.eigenvalues)) @ self.eigenvectors.T


def slope_streams(seed: Optional[int]) -> Tuple[np.random.SeedSequence, np.random.SeedSequence]:
    """Independent streams for the ``A`` and ``B`` perturbations."""
    stream_a, stream_b = np.random.SeedSequence(seed).spawn(2)
    return stream_a, stream_b


def residuals_at(beta: np.ndarray, data: Dataset) -> np.ndarray:
    return martingale_residuals(beta, nelson_aalen(beta, data), data)


def q_n(beta: np.ndarray, E1: np.ndarray, data: Dataset) -> np.ndarray:
    """Residual score ``Q_n(beta) = sum_i int (E1_i - E1_bar) dN_i``.

    Sweeps the residual event times: each event contributes its own column of
    ``E1`` minus the at-risk average of the columns at that time.
    """
    E1 = np.atleast_2d(np.asarray(E1, dtype=float))
    if E1.shape[1] != data.n:
        raise ValueError(f"E1 has {E1.shape[1]} columns, dataset has n={data.n}")
    td = TransformedData.from_dataset(beta, data)
    times, counts = td.event_times()
    if times.size == 0:
        return np.zeros(E1.shape[0])
    # (event times x rows of E1)
    E1_bar = td.risk_sums(times, E1.T) / td.at_risk(times)[:, None]
    return E1 @ td.d - counts @ E1_bar


def _evaluate(fn: Callable[[np.ndarray], np.ndarray], points: np.ndarray) -> np.ndarray:
    return np.vstack([fn(b) for b in points])


def _perturbation_slope(
    fn: Callable[[np.ndarray], np.ndarray],
    center: np.ndarray,
    draws: np.ndarray,
    n: int,
    scale: float,
    workers: int,
) -> np.ndarray:
    """OLS (no intercept) of ``scale * (fn(center + draws/sqrt(n)) - fn(center))`` on ``draws``.

    Returns the (response dim x q) slope. Chunks are evaluated in parallel
    and stacked in submission order, so the result does not depend on the
    worker count.
    """
    points = center[None, :] + draws / np.sqrt(n)
    chunks = [points[i:i + CHUNK_SIZE] for i in range(0, len(points), CHUNK_SIZE)]
    if workers == 1 or len(chunks) == 1:
        blocks = [_evaluate(fn, chunk) for chunk in chunks]
    else:
        blocks = Parallel(n_jobs=workers)(delayed(_evaluate)(fn, chunk) for chunk in chunks)
    base = np.asarray(fn(center), dtype=float)
    responses = scale * (np.vstack(blocks) - base[None, :])
    coef, _, rank, _ = np.linalg.lstsq(draws, responses, rcond=None)
    if rank < draws.shape[1]:
        raise SlopeEstimationError("perturbation design is rank deficient")
    return coef.T


def _check_count(L: int, q: int, label: str) -> None:
    if L < q or L < 1:
        raise SlopeEstimationError(f"{label}={L} perturbations cannot identify a {q}-dim slope")
    if L < 10 * q:
        logger.warning(f"{label}={L} is below 10*q={10 * q}; slope estimates will be noisy")


def estimate_residual_slope(fit: NullFit, L: int, seed: Optional[int] = None, workers: int = 1,
                            stream: Optional[np.random.SeedSequence] = None) -> np.ndarray:
    """Slope (n x q) of ``n^{-1/2} M(beta)`` at ``beta_hat``; ``B_hat = E1 @ slope``."""
    data = fit.dataset
    q = data.q
    if q == 0:
        return np.zeros((data.n, 0))
    _check_count(L, q, "L")
    rng = np.random.default_rng(stream if stream is not None else slope_streams(seed)[1])
    draws = rng.standard_normal((L, q))
    return _perturbation_slope(lambda b: residuals_at(b, data), fit.beta_hat, draws,
                               data.n, 1.0 / np.sqrt(data.n), workers)


def estimate_B(fit: NullFit, E1: np.ndarray, L: int, seed: Optional[int] = None, workers: int = 1,
               qn: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> np.ndarray:
    """Slope matrix ``B_hat`` (m x q) of ``n^{-1/2} Q_n`` at ``beta_hat``."""
    data = fit.dataset
    E1 = np.atleast_2d(np.asarray(E1, dtype=float))
    if qn is None:
        return E1 @ estimate_residual_slope(fit, L, seed, workers)
    if data.q == 0:
        return np.zeros((E1.shape[0], 0))
    _check_count(L, data.q, "L")
    rng = np.random.default_rng(slope_streams(seed)[1])
    draws = rng.standard_normal((L, data.q))
    return _perturbation_slope(qn, fit.beta_hat, draws, data.n, 1.0 / np.sqrt(data.n), workers)


def estimate_A(fit: NullFit, L_tilde: int, seed: Optional[int] = None, workers: int = 1,
               score: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> np.ndarray:
    """Slope matrix ``A_hat`` (q x q) of ``n^{1/2} U_n`` at ``beta_hat``."""
    data = fit.dataset
    q = data.q
    if q == 0:
        return np.zeros((0, 0))
    _check_count(L_tilde, q, "L_tilde")
    if score is None:
        def score(b):
            return estimating_function(b, data)
    rng = np.random.default_rng(slope_streams(seed)[0])
    draws = rng.standard_normal((L_tilde, q))
    A_hat = _perturbation_slope(score, fit.beta_hat, draws, data.n, np.sqrt(data.n), workers)
    condition = float(np.linalg.cond(A_hat))
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise SlopeEstimationError(f"A_hat is ill-conditioned (condition number {condition:.3e})")
    return A_hat


def estimate_slopes(fit: NullFit, L: int = 1000, L_tilde: int = 1000, seed: Optional[int] = None,
                    workers: int = 1) -> SlopeEstimates:
    if not fit.converged:
        logger.warning("Estimating slopes around a non-converged null fit")
    A_hat = estimate_A(fit, L_tilde, seed, workers)
    slope = estimate_residual_slope(fit, L, seed, workers)
    condition = float(np.linalg.cond(A_hat)) if A_hat.size else 1.0
    logger.debug(f"Slopes estimated: L={L}, L_tilde={L_tilde}, cond(A)={condition:.2e}")
    return SlopeEstimates(A_hat, slope, L, L_tilde, seed, condition)


def null_spectrum(fit: NullFit, E1: np.ndarray, A_hat: Optional[np.ndarray] = None,
                  B_hat: Optional[np.ndarray] = None) -> NullSpectrum:
    """Estimated covariance of ``E1 @ M`` and its eigenvalues (descending, clipped at 0).

    With ``C = E1 - B_hat A_hat^{-1} Z^T`` the estimator sums, over event
    times, ``C diag(dLambda_i) C^T`` minus the outer product of the at-risk
    mean of ``C``.
    """
    data = fit.dataset
    E1 = np.atleast_2d(np.asarray(E1, dtype=float))
    m = E1.shape[0]
    if E1.shape[1] != data.n:
        raise ValueError(f"E1 has {E1.shape[1]} columns, dataset has n={data.n}")

    C = E1
    if data.q > 0 and A_hat is not None and B_hat is not None:
        C = E1 - B_hat @ np.linalg.solve(A_hat, data.Z.T)

    td = TransformedData.from_dataset(fit.beta_hat, data)
    times, counts = td.event_times()
    if times.size == 0 or m == 0:
        zero = np.zeros((m, m))
        return NullSpectrum(zero, np.zeros(m), np.eye(m), degenerate=True)

    at_risk = td.at_risk(times)
    cumhaz = fit.lambda_eps(td.e) - fit.lambda_eps(td.e_a)
    first = (C * cumhaz[None, :]) @ C.T
    sums = td.risk_sums(times, C.T)
    second = (sums * (counts / at_risk ** 2)[:, None]).T @ sums
    cov = first - second
    cov = (cov + cov.T) / 2.0

    values, vectors = np.linalg.eigh(cov)
    order = np.argsort(values)[::-1]
    values = np.clip(values[order], 0.0, None)
    vectors = vectors[:, order]
    scale = float(np.trace(first))
    degenerate = scale <= 0 or values[0] <= DEGENERATE_TOL * scale
    return NullSpectrum(cov, values, vectors, degenerate=degenerate)
