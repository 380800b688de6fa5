"""Gene-set scans: one null fit, one test per set, FDR thresholds under arbitrary dependence."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from . import aft_null
from .assoc_tests import FLAG_FAILED, AssociationSession, TestOptions, TestResult
from .config import ScanConfig
from .kernels import KernelMatrix, build_kernel, build_subpop_kernel
from .models import AftkatError, Dataset, GeneSetMap

logger = logging.getLogger(__name__)

THRESHOLD_COLUMNS = ("rank", "set_name", "p_value", "threshold", "significant")


def bh_thresholds(m: int, alpha: float) -> np.ndarray:
    """Step-up thresholds ``alpha * i / (m * sum_{k<=m} 1/k)`` for ``i = 1..m``."""
    if m < 1:
        raise ValueError("need at least one hypothesis")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    harmonic = float(np.sum(1.0 / np.arange(1, m + 1)))
    return alpha * np.arange(1, m + 1) / (m * harmonic)


def step_up(p_values, alpha: float) -> Tuple[np.ndarray, np.ndarray, int]:
    """Sort p-values and find the largest rank ``i`` with ``p_(i) <= threshold_i``.

    Returns ``(order, thresholds, discoveries)``; the first ``discoveries``
    entries of ``order`` index the rejected hypotheses.
    """
    p = np.asarray(p_values, dtype=float)
    thresholds = bh_thresholds(p.size, alpha)
    order = np.argsort(p, kind="stable")
    passing = np.nonzero(p[order] <= thresholds)[0]
    discoveries = int(passing[-1]) + 1 if passing.size else 0
    return order, thresholds, discoveries


@dataclass
class ScanReport:
    results: List[TestResult]
    alpha: float
    order: np.ndarray
    thresholds: np.ndarray
    discoveries: int
    provenance: Dict[str, Any] = field(default_factory=dict)
    null_fit: Dict[str, Any] = field(default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.results)

    @property
    def significant(self) -> List[str]:
        return [self.results[i].set_name for i in self.order[:self.discoveries]]

    @property
    def flagged(self) -> List[TestResult]:
        return [r for r in self.results if r.flags]

    def result_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.to_row() for r in self.results], columns=list(TestResult.COLUMNS))

    def threshold_frame(self) -> pd.DataFrame:
        rows = []
        for rank, (idx, thr) in enumerate(zip(self.order, self.thresholds), start=1):
            result = self.results[idx]
            rows.append([rank, result.set_name, f"{result.p_value:.6e}", f"{thr:.6e}",
                         int(rank <= self.discoveries)])
        return pd.DataFrame(rows, columns=list(THRESHOLD_COLUMNS))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "m": self.m,
            "alpha": self.alpha,
            "discoveries": self.discoveries,
            "significant": self.significant,
            "flagged": [r.set_name for r in self.flagged],
            "null_fit": self.null_fit,
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=float)

    def write(self, out_dir) -> Dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "results": out / "scan_results.tsv",
            "thresholds": out / "scan_thresholds.tsv",
            "summary": out / "scan_summary.json",
        }
        header = "".join(f"# {k}: {v}\n" for k, v in self.provenance.items())
        for key, frame in (("results", self.result_frame()), ("thresholds", self.threshold_frame())):
            with open(paths[key], "w") as f:
                f.write(header)
                frame.to_csv(f, sep="\t", index=False)
        with open(paths["summary"], "w") as f:
            f.write(self.to_json())
        logger.info(f"Scan results saved to {out}")
        return paths


class GenomeScanner:
    """Runs one association method over every gene set of a dataset.

    The null model and the slope estimates are computed once and shared by
    all sets; only the kernel work is repeated per set.
    """

    def __init__(self, config: ScanConfig):
        self.config = config
        self.method = config.test_method
        self.kernel = config.kernel_spec()
        self.hkernel = config.hkernel_spec()
        self.opts = TestOptions(L=config.L, L_tilde=config.L_tilde, seed=config.seed,
                                workers=config.workers, accuracy=config.accuracy)
        self.session: Optional[AssociationSession] = None
        self._H: Optional[KernelMatrix] = None

    def prepare(self, dataset: Dataset) -> AssociationSession:
        fit = aft_null.fit_null(dataset)
        self.session = AssociationSession(fit, self.opts)
        if self.method.heterogeneity:
            if dataset.X is None or self.hkernel is None:
                raise AftkatError(f"method {self.method.value} needs sub-population variables and --hkernel")
            self._H = build_subpop_kernel(self.hkernel, dataset.X)
        if fit.n_events > 0:
            # warm the shared caches before fanning out over sets
            if self.method.corrected:
                _ = self.session.residual_cov
            else:
                _ = self.session.slopes
        return self.session

    def test_set(self, dataset: Dataset, name: str, columns: List[int]) -> TestResult:
        try:
            K = build_kernel(self.kernel, dataset.G[:, columns])
            result = self.session.run(self.method, K, self._H)
        except (AftkatError, np.linalg.LinAlgError) as e:
            logger.warning(f"Gene set '{name}' failed: {e}")
            result = TestResult(0.0, 1.0, self.method, m=0,
                                n_events=self.session.fit.n_events, flags=[FLAG_FAILED],
                                diagnostics={"error": str(e)})
        result.set_name = name
        return result

    def scan(self, dataset: Dataset, gene_sets: GeneSetMap,
             progress: Optional[Callable[[int], None]] = None) -> ScanReport:
        gene_sets.validate(dataset.p)
        if len(gene_sets) < 1:
            raise AftkatError("gene-set map is empty")
        logger.info(f"Scanning {len(gene_sets)} gene sets with {self.method.value} "
                    f"({self.kernel} kernel), n={dataset.n}")
        if self.session is None or self.session.fit.dataset is not dataset:
            self.prepare(dataset)

        results: List[TestResult] = []
        if self.config.workers == 1:
            for name, columns in gene_sets:
                results.append(self.test_set(dataset, name, columns))
                if progress:
                    progress(1)
        else:
            runner = Parallel(n_jobs=self.config.workers, prefer="threads", return_as="generator")
            for result in runner(delayed(self.test_set)(dataset, name, cols) for name, cols in gene_sets):
                results.append(result)
                if progress:
                    progress(1)

        order, thresholds, discoveries = step_up([r.p_value for r in results], self.config.fdr)
        fit = self.session.fit
        report = ScanReport(
            results=results,
            alpha=self.config.fdr,
            order=order,
            thresholds=thresholds,
            discoveries=discoveries,
            provenance=self.config.provenance(),
            null_fit=fit.to_dict(),
        )
        logger.info(f"Scan finished: {discoveries} of {report.m} sets significant at FDR {self.config.fdr}")
        return report


def run_scan(config: ScanConfig, dataset: Dataset, gene_sets: GeneSetMap,
             progress: Optional[Callable[[int], None]] = None) -> ScanReport:
    return GenomeScanner(config).scan(dataset, gene_sets, progress)

