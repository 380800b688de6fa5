"""Data generators for simulation studies.

Event times come from cause-specific hazards ``lambda_j(t) = k_j / theta_j *
lambda0(t / theta_j)`` with ``lambda0(x) = x^2 + x``; AFT draws use ``k = 1,
theta = exp(eta)`` and Cox-type draws use ``theta = 1, k = c * exp(eta)``.
Subjects are left truncated by ``A ~ U(0, 1)`` (kept only when ``T > A``) and
censored at ``C = A + E`` with ``E`` exponential of rate 0.1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, stats
from scipy.linalg import toeplitz

from .models import Dataset, SimulationError, SurvivalRecord

logger = logging.getLogger(__name__)

ROOT_TOL = 1e-10
MIN_ACCEPTANCE = 1e-3
CENSOR_RATE = 0.1


def baseline_hazard(x):
    x = np.asarray(x, dtype=float)
    return x * x + x


def baseline_cumhaz(x):
    x = np.asarray(x, dtype=float)
    return x ** 3 / 3.0 + x ** 2 / 2.0


def _cause_cumhaz(t, k, theta):
    return k * baseline_cumhaz(t / theta)


def _cause_hazard(t, k, theta):
    return k / theta * baseline_hazard(t / theta)


def _invert_total_hazard(target: np.ndarray, k1, theta1, k2, theta2) -> np.ndarray:
    """Solve ``Lambda_1(T) + Lambda_2(T) = target`` by bracket doubling and bisection."""

    def total(t):
        return _cause_cumhaz(t, k1, theta1) + _cause_cumhaz(t, k2, theta2)

    lo = np.zeros_like(target)
    hi = np.ones_like(target)
    short = total(hi) < target
    while np.any(short):
        hi = np.where(short, 2.0 * hi, hi)
        short = total(hi) < target
    while np.max(hi - lo) > ROOT_TOL:
        mid = (lo + hi) / 2.0
        below = total(mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= ROOT_TOL * np.maximum(1.0, hi)):
            break
    return (lo + hi) / 2.0


def _draw_competing(k1, theta1, k2, theta2, rng: np.random.Generator, size: int):
    k1, theta1, k2, theta2 = (np.broadcast_to(np.asarray(v, dtype=float), (size,))
                              for v in (k1, theta1, k2, theta2))
    target = -np.log(rng.uniform(size=size))
    T = _invert_total_hazard(target, k1, theta1, k2, theta2)
    h1 = _cause_hazard(T, k1, theta1)
    h2 = _cause_hazard(T, k2, theta2)
    cause = np.where(rng.uniform(size=size) * (h1 + h2) < h1, 1, 2)
    return T, cause


def gen_competing_aft(eta1, eta2, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Event times and causes under two AFT cause-specific hazards.

    ``eta2`` may be None or ``-inf`` entries to switch the second cause off.
    """
    eta1 = np.atleast_1d(np.asarray(eta1, dtype=float))
    size = eta1.size
    if eta2 is None:
        eta2 = np.full(size, -np.inf)
    eta2 = np.broadcast_to(np.asarray(eta2, dtype=float), (size,))
    if not np.all(np.isfinite(eta1)):
        raise SimulationError("linear predictor for cause 1 must be finite")
    active = np.isfinite(eta2)
    k2 = active.astype(float)
    theta2 = np.where(active, np.exp(np.where(active, eta2, 0.0)), 1.0)
    return _draw_competing(1.0, np.exp(eta1), k2, theta2, rng, size)


def gen_competing_cox(eta1, eta2, rng: np.random.Generator, c1: float = 0.5,
                      c2: float = 0.1) -> Tuple[np.ndarray, np.ndarray]:
    """Event times under Cox-type hazards ``c_j (t + t^2) exp(eta_j)``."""
    eta1 = np.atleast_1d(np.asarray(eta1, dtype=float))
    eta2 = np.broadcast_to(np.asarray(eta2, dtype=float), eta1.shape)
    return _draw_competing(c1 * np.exp(eta1), 1.0, c2 * np.exp(eta2), 1.0, rng, eta1.size)


def cumulative_incidence_closed_form(t: float, theta1: float, theta2: Optional[float] = None) -> float:
    """Cause-1 cumulative incidence ``int_0^t lambda_1 exp(-Lambda_1 - Lambda_2)``."""

    def integrand(s):
        total = _cause_cumhaz(s, 1.0, theta1)
        if theta2 is not None:
            total = total + _cause_cumhaz(s, 1.0, theta2)
        return _cause_hazard(s, 1.0, theta1) * np.exp(-total)

    value, _ = integrate.quad(integrand, 0.0, t, limit=200)
    return float(value)


def default_covariates(size: int, rng: np.random.Generator) -> np.ndarray:
    """``Z1 ~ Bernoulli(0.5)`` and ``Z2 ~ U(0, 2)``."""
    return np.column_stack([rng.binomial(1, 0.5, size).astype(float), rng.uniform(0.0, 2.0, size)])


def hwe_thresholds(maf: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    maf = np.asarray(maf, dtype=float)
    return stats.norm.ppf((1.0 - maf) ** 2), stats.norm.ppf(1.0 - maf ** 2)


def draw_maf(p: int, rng: np.random.Generator, a: float = 2.0, b: float = 5.0) -> np.ndarray:
    return rng.beta(a, b, size=p)


def gen_snps_mvn(n: int, p: int, rng: np.random.Generator, maf: Optional[np.ndarray] = None,
                 decay: float = 0.5) -> np.ndarray:
    """Genotypes by thresholding correlated normals at Hardy-Weinberg cut-offs.

    Latent rows are ``MVN(0, decay^|k-l|)``; each column's minor allele
    frequency is drawn from Beta(2, 5) unless ``maf`` is given.
    """
    if n < 1 or p < 1:
        raise SimulationError("gen_snps_mvn needs n >= 1 and p >= 1")
    if maf is None:
        maf = draw_maf(p, rng)
    cov = toeplitz(decay ** np.arange(p))
    latent = rng.multivariate_normal(np.zeros(p), cov, size=n, method="cholesky")
    low, high = hwe_thresholds(maf)
    return (latent > low).astype(float) + (latent > high).astype(float)


def gen_expression_confounded(n: int, p: int, Z: np.ndarray, rng: np.random.Generator,
                              decay: float = 0.1) -> np.ndarray:
    """Expression markers sharing a quadratic mean surface in ``(Z1, Z2)``."""
    Z = np.asarray(Z, dtype=float)
    if Z.shape != (n, 2):
        raise SimulationError("quadratic confounding needs exactly two covariates")
    z1, z2 = Z[:, 0], Z[:, 1]
    mean = 0.5 * z1 + 0.5 * z2 + 0.25 * z1 ** 2 + 0.25 * z2 ** 2 + 0.5 * z1 * z2
    noise = rng.multivariate_normal(np.zeros(p), toeplitz(decay ** np.arange(p)), size=n,
                                    method="cholesky")
    return mean[:, None] + noise


def rank_genotypes(latent: np.ndarray, maf: np.ndarray) -> np.ndarray:
    """Categorize each column by rank so genotype counts follow HWE at the given MAF."""
    n, D = latent.shape
    ranks = np.argsort(np.argsort(latent, axis=0, kind="mergesort"), axis=0, kind="mergesort")
    n0 = np.rint(n * (1.0 - maf) ** 2).astype(int)
    n2 = np.rint(n * maf ** 2).astype(int)
    genotypes = np.ones((n, D))
    genotypes[ranks < n0[None, :]] = 0.0
    genotypes[ranks >= (n - n2)[None, :]] = 2.0
    return genotypes


def gen_genome_profile(effects: Optional[np.ndarray], sigma: float, D: int,
                       rng: np.random.Generator, n: Optional[int] = None) -> np.ndarray:
    """Background SNPs whose subject-by-subject correlation tracks effect similarity.

    Under the null (``effects`` is None) the latent columns are independent
    across subjects.
    """
    if effects is None:
        if n is None:
            raise SimulationError("null genome profile needs n")
        latent = rng.standard_normal((n, D))
    else:
        effects = np.asarray(effects, dtype=float)
        if sigma <= 0:
            raise SimulationError("sigma must be positive for the genome profile")
        cov = np.exp(-np.abs(effects[:, None] - effects[None, :]) / sigma)
        chol = np.linalg.cholesky(cov + 1e-10 * np.eye(effects.size))
        latent = chol @ rng.standard_normal((effects.size, D))
    maf = draw_maf(D, rng, 1.0, 3.0)
    return rank_genotypes(latent, maf)


def uniform_effects(size: int, mean: float, sd: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform draws with the requested mean and standard deviation."""
    half = np.sqrt(3.0) * sd
    return rng.uniform(mean - half, mean + half, size=size)


@dataclass
class SubjectBatch:
    """Candidate subjects before truncation is applied."""

    Z: np.ndarray
    G: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray
    group: np.ndarray
    effect: Optional[np.ndarray] = None
    X: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.eta1.size

    def take(self, mask: np.ndarray) -> "SubjectBatch":
        return SubjectBatch(
            self.Z[mask], self.G[mask], self.eta1[mask], self.eta2[mask], self.group[mask],
            None if self.effect is None else self.effect[mask],
            None if self.X is None else self.X[mask],
        )

    @staticmethod
    def concat(batches: Sequence["SubjectBatch"]) -> "SubjectBatch":
        def stack(name):
            parts = [getattr(b, name) for b in batches]
            return None if parts[0] is None else np.concatenate(parts)

        return SubjectBatch(*(stack(name) for name in
                              ("Z", "G", "eta1", "eta2", "group", "effect", "X")))


@dataclass
class GenerationStats:
    drawn: int = 0
    # candidates with T > A, before quota trimming
    survived: int = 0
    accepted: int = 0
    events: Dict[int, int] = field(default_factory=dict)

    @property
    def acceptance(self) -> float:
        return self.survived / self.drawn if self.drawn else 0.0


def _quota_labels(remaining: np.ndarray, size: int) -> np.ndarray:
    """Group labels for the next candidates, proportional to outstanding quota."""
    groups = np.repeat(np.arange(remaining.size), np.maximum(remaining, 0))
    return np.resize(groups, size)


def gen_dataset(scenario, rng: np.random.Generator, censoring: bool = True) -> Dataset:
    """Draw ``scenario.n`` left-truncated, censored subjects.

    Candidates are redrawn until ``T > A``; sub-population counts are held
    equal (differing by at most one).
    """
    n = scenario.n
    state = scenario.prepare(rng)
    quota = np.full(scenario.groups, n // scenario.groups)
    quota[: n % scenario.groups] += 1
    remaining = quota.copy()

    accepted: List[SubjectBatch] = []
    times: List[np.ndarray] = []
    causes: List[np.ndarray] = []
    entries: List[np.ndarray] = []
    gen = GenerationStats()

    while remaining.sum() > 0:
        need = int(remaining.sum())
        size = max(2 * need, 64)
        labels = _quota_labels(remaining, size)
        batch = scenario.draw_subjects(labels, rng, state)
        if scenario.hazard_model == "cox":
            T, cause = gen_competing_cox(batch.eta1, batch.eta2, rng, *scenario.hazard_scale)
        else:
            T, cause = gen_competing_aft(batch.eta1, batch.eta2, rng)
        A = rng.uniform(0.0, scenario.truncation_upper, size=size)
        keep = T > A
        gen.drawn += size
        gen.survived += int(keep.sum())
        # fill each group's quota in draw order
        order_in_group = np.zeros(size, dtype=int)
        for g in range(scenario.groups):
            idx = np.flatnonzero(keep & (labels == g))
            order_in_group[idx] = np.arange(idx.size)
        keep &= order_in_group < remaining[labels]
        gen.accepted += int(keep.sum())
        if gen.drawn >= 1000 * n and gen.acceptance < MIN_ACCEPTANCE:
            raise SimulationError(
                f"truncation acceptance rate {gen.acceptance:.2e} too low for scenario {scenario.name}"
            )
        if not np.any(keep):
            continue
        accepted.append(batch.take(keep))
        times.append(T[keep])
        causes.append(cause[keep])
        entries.append(A[keep])
        remaining -= np.bincount(labels[keep], minlength=scenario.groups)

    subjects = SubjectBatch.concat(accepted)
    T = np.concatenate(times)
    cause = np.concatenate(causes)
    A = np.concatenate(entries)
    if censoring:
        C = A + rng.exponential(1.0 / CENSOR_RATE, size=n)
    else:
        C = np.full(n, np.inf)
    observed = np.minimum(T, C)
    status = np.where(T <= C, cause, 0)
    gen.events = {int(s): int(np.sum(status == s)) for s in (0, 1, 2)}

    X = scenario.subpopulation(subjects, rng, state)
    survival = tuple(
        SurvivalRecord(f"s{i + 1}", float(A[i]), float(observed[i]), int(status[i]))
        for i in range(n)
    )
    metadata = {
        "scenario": scenario.name,
        "settings": scenario.settings(),
        "acceptance": gen.acceptance,
        "events": gen.events,
    }
    logger.debug(f"{scenario.name}: n={n}, acceptance={gen.acceptance:.3f}, events={gen.events}")
    return Dataset(
        survival=survival,
        Z=subjects.Z,
        G=subjects.G,
        X=X,
        cause_of_interest=1,
        metadata=metadata,
    )


def gen_heterogeneity_scenario(scenario, rng: np.random.Generator) -> Dataset:
    """As :func:`gen_dataset` for scenarios that carry a sub-population matrix."""
    if not scenario.has_subpopulation:
        raise SimulationError(f"scenario {scenario.name} has no sub-population variables")
    return gen_dataset(scenario, rng)
