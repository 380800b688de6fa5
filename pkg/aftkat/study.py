"""Monte-Carlo size and power studies over simulated replicates."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import stats

from . import aft_null
from .assoc_tests import AssociationSession, TestMethod, TestOptions
from .kernels import KernelSpec, build_kernel, build_subpop_kernel
from .models import AftkatError, SimulationError
from .simgen import gen_dataset

logger = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.05


def replicate_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """RNG stream for replicate ``index``; independent of worker count and order."""
    return np.random.SeedSequence([int(master_seed), int(index)])


@dataclass
class ReplicateOutcome:
    index: int
    p_values: Dict[str, float] = field(default_factory=dict)
    events: Dict[int, int] = field(default_factory=dict)
    acceptance: float = float("nan")
    flags: Dict[str, List[str]] = field(default_factory=dict)
    error: Optional[str] = None
    seconds: float = 0.0


@dataclass
class StudyReport:
    scenario: str
    settings: Dict[str, Any]
    replicates: int
    alphas: List[float]
    methods: List[str]
    p_values: Dict[str, List[float]]
    rates: Dict[str, Dict[float, float]] = field(default_factory=dict)
    standard_errors: Dict[str, Dict[float, float]] = field(default_factory=dict)
    ks: Dict[str, Dict[str, float]] = field(default_factory=dict)
    failed: List[int] = field(default_factory=list)
    acceptance: float = float("nan")
    mean_events: Dict[int, float] = field(default_factory=dict)
    provenance: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for method, values in self.p_values.items():
            if len(values) != self.replicates:
                raise SimulationError(f"{method}: {len(values)} p-values for {self.replicates} replicates")
        if not self.rates:
            self._summarize()

    def _summarize(self):
        for method, values in self.p_values.items():
            p = np.asarray(values, dtype=float)
            p = p[np.isfinite(p)]
            self.rates[method] = {}
            self.standard_errors[method] = {}
            for alpha in self.alphas:
                rate = float(np.mean(p <= alpha)) if p.size else float("nan")
                self.rates[method][alpha] = rate
                self.standard_errors[method][alpha] = (
                    float(np.sqrt(rate * (1.0 - rate) / p.size)) if p.size else float("nan")
                )
            if p.size >= 2:
                result = stats.kstest(p, "uniform")
                self.ks[method] = {"statistic": float(result.statistic), "p_value": float(result.pvalue)}

    @property
    def completed(self) -> int:
        return self.replicates - len(self.failed)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario,
            "settings": self.settings,
            "replicates": self.replicates,
            "completed": self.completed,
            "alphas": self.alphas,
            "methods": self.methods,
            "rates": {m: {str(a): r for a, r in v.items()} for m, v in self.rates.items()},
            "standard_errors": {m: {str(a): r for a, r in v.items()} for m, v in self.standard_errors.items()},
            "ks": self.ks,
            "failed": self.failed,
            "acceptance": self.acceptance,
            "mean_events": {str(k): v for k, v in self.mean_events.items()},
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=float)

    def rate_frame(self) -> pd.DataFrame:
        rows = []
        for method in self.methods:
            for alpha in self.alphas:
                rows.append({
                    "method": method,
                    "alpha": alpha,
                    "rate": self.rates[method][alpha],
                    "se": self.standard_errors[method][alpha],
                    "completed": self.completed,
                })
        return pd.DataFrame(rows, columns=["method", "alpha", "rate", "se", "completed"])

    def pvalue_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.p_values, columns=self.methods)
        frame.insert(0, "replicate", np.arange(self.replicates))
        return frame

    def to_tsv(self, out_dir) -> Dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "rates": out / "study_rates.tsv",
            "pvalues": out / "study_pvalues.tsv",
            "summary": out / "study_summary.json",
        }
        header = "".join(f"# {k}: {v}\n" for k, v in self.provenance.items())
        for key, frame in (("rates", self.rate_frame()), ("pvalues", self.pvalue_frame())):
            with open(paths[key], "w") as f:
                f.write(header)
                frame.to_csv(f, sep="\t", index=False, float_format="%.6g")
        with open(paths["summary"], "w") as f:
            f.write(self.to_json())
        return paths


def run_replicate(scenario, methods: Sequence[TestMethod], index: int, master_seed: int,
                  opts: TestOptions, kernel: KernelSpec, subpop_kernel: Optional[KernelSpec],
                  solver: Optional[aft_null.SolverOptions] = None) -> ReplicateOutcome:
    started = time.time()
    outcome = ReplicateOutcome(index=index)
    data_seq, slope_seq = replicate_seed(master_seed, index).spawn(2)
    try:
        dataset = gen_dataset(scenario, np.random.default_rng(data_seq))
        outcome.acceptance = dataset.metadata["acceptance"]
        outcome.events = dataset.metadata["events"]
        fit = aft_null.fit_null(dataset, solver)
        replicate_opts = TestOptions(opts.L, opts.L_tilde, int(slope_seq.generate_state(1)[0]),
                                     1, opts.accuracy)
        session = AssociationSession(fit, replicate_opts)
        K = build_kernel(kernel, dataset.G)
        H = None
        if any(m.heterogeneity for m in methods):
            if dataset.X is None or subpop_kernel is None:
                raise SimulationError("heterogeneity methods need sub-population variables and a kernel")
            H = build_subpop_kernel(subpop_kernel, dataset.X)
        for method in methods:
            result = session.run(method, K, H)
            outcome.p_values[method.value] = result.p_value
            outcome.flags[method.value] = result.flags
    except (AftkatError, np.linalg.LinAlgError) as e:
        outcome.error = f"{type(e).__name__}: {e}"
    outcome.seconds = time.time() - started
    return outcome


def run_study(
    scenario,
    methods: Sequence[TestMethod],
    replicates: int,
    alphas: Sequence[float] = (0.05,),
    master_seed: int = 0,
    workers: int = 1,
    opts: Optional[TestOptions] = None,
    kernel: Optional[KernelSpec] = None,
    subpop_kernel: Optional[KernelSpec] = None,
    solver: Optional[aft_null.SolverOptions] = None,
    progress: Optional[Callable[[int], None]] = None,
) -> StudyReport:
    """Simulate ``replicates`` datasets, test each with every method and tabulate rejection rates.

    Replicate ``r`` draws from ``SeedSequence([master_seed, r])`` so the
    report is identical for any worker count.
    """
    if replicates < 1:
        raise SimulationError("replicates must be >= 1")
    methods = [m if isinstance(m, TestMethod) else TestMethod.parse(m) for m in methods]
    opts = opts or TestOptions(L=1000, L_tilde=1000)
    kernel = kernel or KernelSpec.parse(scenario.kernel)
    if subpop_kernel is None and scenario.subpop_kernel:
        subpop_kernel = KernelSpec.parse(scenario.subpop_kernel)

    logger.info(f"Study {scenario.name}: {replicates} replicates, methods "
                f"{[m.value for m in methods]}, workers={workers}")
    tasks = (delayed(run_replicate)(scenario, methods, r, master_seed, opts, kernel, subpop_kernel, solver)
             for r in range(replicates))
    outcomes: List[ReplicateOutcome] = []
    if workers == 1:
        for task in tasks:
            fn, args, kwargs = task
            outcomes.append(fn(*args, **kwargs))
            if progress:
                progress(1)
    else:
        for outcome in Parallel(n_jobs=workers, return_as="generator")(tasks):
            outcomes.append(outcome)
            if progress:
                progress(1)

    failed = [o.index for o in outcomes if o.error is not None]
    for o in outcomes:
        if o.error is not None:
            logger.warning(f"Replicate {o.index} failed: {o.error}")
    if len(failed) > MAX_FAILURE_FRACTION * replicates:
        raise SimulationError(f"{len(failed)} of {replicates} replicates failed")

    p_values = {m.value: [o.p_values.get(m.value, float("nan")) for o in outcomes] for m in methods}
    ok = [o for o in outcomes if o.error is None]
    mean_events = {c: float(np.mean([o.events.get(c, 0) for o in ok])) if ok else float("nan")
                   for c in (0, 1, 2)}
    report = StudyReport(
        scenario=scenario.name,
        settings={**scenario.settings(), "kernel": str(kernel),
                  "subpop_kernel": str(subpop_kernel) if subpop_kernel else None},
        replicates=replicates,
        alphas=[float(a) for a in alphas],
        methods=[m.value for m in methods],
        p_values=p_values,
        failed=failed,
        acceptance=float(np.mean([o.acceptance for o in ok])) if ok else float("nan"),
        mean_events=mean_events,
        provenance={"seed": master_seed, "L": opts.L, "L_tilde": opts.L_tilde,
                    "replicates": replicates},
    )
    for method in report.methods:
        logger.info(f"{scenario.name} {method}: " + ", ".join(
            f"rate@{a:g}={report.rates[method][a]:.4f}" for a in report.alphas))
    return report
