"""Null AFT fit: rank-based estimating equation with log-rank weights,
Nelson-Aalen estimate of the error cumulative hazard, and martingale
residuals on the residual (log-time) scale.

Risk sets follow the left-truncated convention: subject ``j`` is at risk at
residual time ``s`` when ``e_a[j] < s <= e[j]``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from .models import Dataset, FitError

logger = logging.getLogger(__name__)


@dataclass
class SolverOptions:
    """Settings for the derivative-free search on ``||U_n(beta)||^2``."""

    max_starts: int = 5
    step: float = 0.5
    max_evals: int = 2000
    tol_scale: float = 1e-4
    # exact search over ordering changes for q == 1 when the pair count is small;
    # also the pair block size of the windowed line searches
    breakpoint_limit: int = 20000
    refine_sweeps: int = 10
    line_window: int = 200


def tail_sums(keys: np.ndarray, weights: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Return ``sum(weights[keys >= t])`` for every ``t`` in ``points``."""
    order = np.argsort(keys, kind="mergesort")
    sorted_keys = keys[order]
    w = weights[order]
    tail = np.zeros((len(keys) + 1,) + w.shape[1:])
    if len(keys):
        tail[:-1] = np.cumsum(w[::-1], axis=0)[::-1]
    idx = np.searchsorted(sorted_keys, points, side="left")
    return tail[idx]


@dataclass(frozen=True, eq=False)
class TransformedData:
    """Residual log-times, residual log-entry times and event indicators at a given beta."""

    e: np.ndarray
    e_a: np.ndarray
    d: np.ndarray

    @classmethod
    def from_dataset(cls, beta: np.ndarray, data: Dataset) -> "TransformedData":
        beta = np.asarray(beta, dtype=float).reshape(-1)
        if beta.size != data.q:
            raise ValueError(f"beta has {beta.size} entries, dataset has q={data.q}")
        shift = data.Z @ beta
        e = data.log_time - shift
        e_a = data.log_entry - shift
        # an event at the entry time still counts as at risk at that jump
        e_a = np.where(e_a >= e, np.nextafter(e, -np.inf), e_a)
        return cls(e=e, e_a=e_a, d=data.events)

    @property
    def n(self) -> int:
        return self.e.size

    def event_times(self) -> Tuple[np.ndarray, np.ndarray]:
        """Distinct residual event times and the number of events at each."""
        times, counts = np.unique(self.e[self.d > 0], return_counts=True)
        return times, counts.astype(float)

    def risk_sums(self, times: np.ndarray, weights: Optional[np.ndarray] = None) -> np.ndarray:
        """Sum of ``weights`` over the risk set at each time (counts when ``weights`` is None)."""
        if weights is None:
            weights = np.ones(self.n)
        return tail_sums(self.e, weights, times) - tail_sums(self.e_a, weights, times)

    def at_risk(self, times: np.ndarray) -> np.ndarray:
        counts = self.risk_sums(times)
        empty = np.flatnonzero(counts <= 0)
        if empty.size:
            raise FitError("no subject at risk at an event time", time=float(times[empty[0]]))
        return counts

    def at_risk_matrix(self, times: np.ndarray) -> np.ndarray:
        """Indicator matrix ``Y[k, i]`` of subject ``i`` being at risk at ``times[k]``."""
        t = times[:, None]
        return ((self.e_a[None, :] < t) & (t <= self.e[None, :])).astype(float)


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous non-decreasing step function, zero before the first jump."""

    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.shape != values.shape:
            raise ValueError("times and values must have the same length")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("jump locations must be strictly increasing")
        if values.size and (values[0] < 0 or np.any(np.diff(values) < 0)):
            raise ValueError("step function must be non-decreasing from 0")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right")
        padded = np.concatenate(([0.0], self.values))
        return padded[idx]

    @property
    def jumps(self) -> np.ndarray:
        return np.diff(self.values, prepend=0.0)

    def __len__(self) -> int:
        return self.times.size


@dataclass(frozen=True, eq=False)
class NullFit:
    """Fitted null model shared by every test run on the same dataset."""

    beta_hat: np.ndarray
    lambda_eps: StepFunction
    residuals: np.ndarray
    score_norm: float
    converged: bool
    dataset: Dataset
    evaluations: int = 0

    def __post_init__(self):
        for name in ("beta_hat", "residuals"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_events(self) -> int:
        return int(self.dataset.events.sum())

    def to_dict(self):
        return {
            "beta_hat": self.beta_hat.tolist(),
            "score_norm": self.score_norm,
            "converged": self.converged,
            "n_events": self.n_events,
            "evaluations": self.evaluations,
        }


def estimating_function(beta: np.ndarray, data: Dataset) -> np.ndarray:
    """Log-rank estimating function ``U_n(beta)`` (a q-vector)."""
    if data.q == 0:
        return np.zeros(0)
    td = TransformedData.from_dataset(beta, data)
    times, counts = td.event_times()
    if times.size == 0:
        return np.zeros(data.q)
    at_risk = td.at_risk(times)
    z_bar = td.risk_sums(times, data.Z) / at_risk[:, None]
    observed = data.Z[td.d > 0].sum(axis=0)
    return (observed - counts @ z_bar) / data.n


def _score_tolerance(data: Dataset, opts: SolverOptions) -> float:
    return opts.tol_scale * max(data.events.sum(), 1.0) / data.n


def _starts(q: int, opts: SolverOptions):
    yield np.zeros(q)
    for k in range(q):
        for sign in (1.0, -1.0):
            start = np.zeros(q)
            start[k] = sign * opts.step
            yield start


def _line_breakpoints(data: Dataset, beta: np.ndarray, direction: np.ndarray,
                      window: Optional[int], limit: int) -> Optional[np.ndarray]:
    """Offsets ``t`` along ``beta + t * direction`` at which the residual ordering changes.

    Returns the breakpoints, midpoints between neighbours and one point beyond
    each end. With a ``window`` only the ``window`` nearest breakpoints on each
    side of ``t = 0`` are kept; without one the full set is built, or None when
    the pair count exceeds ``limit``.
    """
    z = data.Z @ direction
    shift = data.Z @ beta
    e = data.log_time - shift
    finite = np.isfinite(data.log_entry)
    ys = np.concatenate([e, data.log_entry[finite] - shift[finite]])
    zs = np.concatenate([z, z[finite]])
    if window is None and data.n * ys.size > limit:
        return None
    chunk = max(1, limit // max(ys.size, 1))
    below, above = [], []
    for start in range(0, data.n, chunk):
        dy = e[start:start + chunk, None] - ys[None, :]
        dz = z[start:start + chunk, None] - zs[None, :]
        mask = dz != 0
        t = dy[mask] / dz[mask]
        neg, pos = t[t < 0], t[t >= 0]
        if window is not None:
            if neg.size > window:
                neg = np.partition(neg, neg.size - window)[neg.size - window:]
            if pos.size > window:
                pos = np.partition(pos, window - 1)[:window]
        below.append(neg)
        above.append(pos)
    neg = np.unique(np.concatenate(below)) if below else np.zeros(0)
    pos = np.unique(np.concatenate(above)) if above else np.zeros(0)
    if window is not None:
        neg, pos = neg[-window:], pos[:window]
    points = np.concatenate([neg, pos])
    if points.size == 0:
        return None
    mids = (points[1:] + points[:-1]) / 2.0
    return np.concatenate(([points[0] - 1.0], mids, [points[-1] + 1.0], points))


def fit_beta(data: Dataset, opts: Optional[SolverOptions] = None) -> Tuple[np.ndarray, float, bool]:
    beta_hat, score_norm, converged, _ = _search_beta(data, opts or SolverOptions())
    return beta_hat, score_norm, converged


def _search_beta(data: Dataset, opts: SolverOptions) -> Tuple[np.ndarray, float, bool, int]:
    """Approximately solve ``U_n(beta) = 0``.

    ``U_n`` is piecewise constant, so ``||U_n||^2`` is minimised by
    Nelder-Mead from deterministic starts (origin, then +-step along each
    axis). With one covariate every ordering interval is then scanned
    exactly. Otherwise the best point is refined by exact line searches over
    the nearest ordering changes along each axis and along the current score,
    with a shrinking Nelder-Mead restart whenever a sweep stalls. The best
    point found is always returned along with an honest convergence flag.
    """
    q = data.q
    if q == 0:
        return np.zeros(0), 0.0, True, 0
    tol = _score_tolerance(data, opts)
    best = {"beta": np.zeros(q), "f": np.inf, "evals": 0}

    def objective(beta):
        u = estimating_function(beta, data)
        f = float(u @ u)
        best["evals"] += 1
        if f < best["f"]:
            best["f"] = f
            best["beta"] = np.array(beta, dtype=float)
        return f

    def done() -> bool:
        return np.sqrt(best["f"]) <= tol

    def nelder_mead(x0, step):
        simplex = np.vstack([x0] + [x0 + step * np.eye(q)[k] for k in range(q)])
        return minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={
                "initial_simplex": simplex,
                "maxfev": opts.max_evals,
                "xatol": 1e-10,
                "fatol": (tol * tol) * 1e-2,
            },
        )

    objective(np.zeros(q))
    starts = 0
    for x0 in _starts(q, opts):
        if done() or starts >= opts.max_starts:
            break
        starts += 1
        result = nelder_mead(x0, opts.step)
        logger.debug(f"Start {starts} from {x0}: f={result.fun:.3e}, nfev={result.nfev}")

    if q == 1 and not done():
        candidates = _line_breakpoints(data, np.zeros(1), np.ones(1), None, opts.breakpoint_limit)
        if candidates is not None:
            for b in candidates:
                objective(np.array([b]))

    step = opts.step
    for sweep in range(opts.refine_sweeps):
        if done():
            break
        before = best["f"]
        directions = list(np.eye(q))
        u = estimating_function(best["beta"], data)
        if np.linalg.norm(u) > 0:
            directions.append(u / np.linalg.norm(u))
        for direction in directions:
            origin = best["beta"].copy()
            offsets = _line_breakpoints(data, origin, direction, opts.line_window,
                                        opts.breakpoint_limit)
            if offsets is None:
                continue
            for t in offsets:
                objective(origin + t * direction)
            if done():
                break
        if done():
            break
        if best["f"] >= before:
            step /= 10.0
            nelder_mead(best["beta"].copy(), step)
            if best["f"] >= before:
                logger.debug(f"Refinement stalled after {sweep + 1} sweeps at f={best['f']:.3e}")
                break

    score_norm = float(np.sqrt(best["f"]))
    converged = score_norm <= tol
    if not converged:
        logger.debug(f"Score norm {score_norm:.3e} above tolerance {tol:.3e} after {starts} starts")
    return best["beta"], score_norm, converged, best["evals"]


def nelson_aalen(beta: np.ndarray, data: Dataset) -> StepFunction:
    """Nelson-Aalen estimate of the error cumulative hazard on the residual scale."""
    td = TransformedData.from_dataset(beta, data)
    times, counts = td.event_times()
    if times.size == 0:
        return StepFunction()
    at_risk = td.at_risk(times)
    return StepFunction(times, np.cumsum(counts / at_risk))


def martingale_residuals(beta: np.ndarray, lambda_eps: StepFunction, data: Dataset) -> np.ndarray:
    """``M_i = N_i(inf) - (Lambda(e_i) - Lambda(e_a_i))``; residuals sum to zero."""
    td = TransformedData.from_dataset(beta, data)
    return td.d - (lambda_eps(td.e) - lambda_eps(td.e_a))


def fit_null(data: Dataset, opts: Optional[SolverOptions] = None) -> NullFit:
    beta_hat, score_norm, converged, evaluations = _search_beta(data, opts or SolverOptions())
    lambda_eps = nelson_aalen(beta_hat, data)
    residuals = martingale_residuals(beta_hat, lambda_eps, data)
    if not converged:
        logger.warning(f"Null fit did not converge (score norm {score_norm:.3e})")
    logger.info(f"Null fit: beta={np.round(beta_hat, 4).tolist()}, score_norm={score_norm:.2e}, "
                f"events={int(data.events.sum())}")
    return NullFit(
        beta_hat=beta_hat,
        lambda_eps=lambda_eps,
        residuals=residuals,
        score_norm=score_norm,
        converged=converged,
        dataset=data,
        evaluations=evaluations,
    )
