#!/usr/bin/env python3
"""
aftkat command line
Kernel association tests for left-truncated competing-risks data: single tests,
gene-set scans, simulation, calibration studies and Q-Q diagnostics.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from rich import box
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn
from rich.table import Table

from . import __version__, aft_null
from .assoc_tests import AssociationSession, TestOptions, TestResult
from .config import CALIBRATION_PERTURBATIONS, DEFAULT_KERNEL, ScanConfig, load_config
from .data_loader import load_dataset, load_gene_sets, write_dataset, write_gene_sets
from .kernels import build_kernel, build_subpop_kernel
from .models import AftkatError, GeneSetMap
from .qq import qq_frame, qq_table, load_pvalues, render_png, render_svg
from .scan import GenomeScanner
from .scenarios import ScenarioFactory
from .simgen import gen_dataset
from .study import run_study

console = Console(stderr=True)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FLAGGED = 2

DEFAULT_BLOCK_SIZE = 5


def configure_logging(verbose: bool = False, quiet: bool = False, level: str = "INFO") -> None:
    if verbose:
        level = "DEBUG"
    elif quiet:
        level = "WARNING"
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


def _progress() -> Progress:
    return Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TextColumn("{task.completed}/{task.total}"),
        console=console,
        transient=False,
    )


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got '{text}'")


def _scenario_params(items: Optional[List[str]]) -> Dict[str, Any]:
    params: Dict[str, Any] = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise AftkatError(f"malformed scenario parameter '{item}' (expected key=value)")
        for cast in (int, float):
            try:
                params[key.strip()] = cast(value)
                break
            except ValueError:
                continue
        else:
            params[key.strip()] = value.strip()
    return params


def resolve_config(args: argparse.Namespace) -> ScanConfig:
    """Defaults < config file < flags."""
    config = load_config(args.config) if getattr(args, "config", None) else ScanConfig()
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "func")}
    return config.merged(overrides)


def _header(title: str, config: ScanConfig, extra: str = "") -> None:
    console.print(Panel.fit(
        f"[bold cyan]{title}[/bold cyan]\n"
        f"[dim]aftkat {__version__} | method {config.method} | kernel {config.kernel or DEFAULT_KERNEL} | "
        f"seed {config.seed}[/dim]" + (f"\n[dim]{extra}[/dim]" if extra else ""),
        border_style="cyan",
    ))


def _write_tsv_stdout(provenance: Dict[str, Any], rows: List[List[str]], columns) -> None:
    for key, value in provenance.items():
        sys.stdout.write(f"# {key}: {value}\n")
    sys.stdout.write("\t".join(columns) + "\n")
    for row in rows:
        sys.stdout.write("\t".join(row) + "\n")
    sys.stdout.flush()


def cmd_test(args: argparse.Namespace) -> int:
    config = resolve_config(args).validate(require=("survival", "genotypes"))
    method = config.test_method
    dataset = load_dataset(config.survival, config.genotypes, config.covariates, config.subpop, config.cause)
    fit = aft_null.fit_null(dataset)
    opts = TestOptions(config.L, config.L_tilde, config.seed, config.workers, config.accuracy)
    session = AssociationSession(fit, opts)
    K = build_kernel(config.kernel_spec(), dataset.G)
    H = None
    if method.heterogeneity:
        H = build_subpop_kernel(config.hkernel_spec(), dataset.X)
    result = session.run(method, K, H)

    _write_tsv_stdout(config.provenance(), [result.to_row()], TestResult.COLUMNS)
    if result.flags:
        console.print(f"[yellow]Result flagged: {', '.join(result.flags)}[/yellow]")
    # degenerate results carry p = 1
    if result.degenerate:
        return EXIT_FLAGGED
    return EXIT_OK


def cmd_scan(args: argparse.Namespace) -> int:
    config = resolve_config(args).validate(require=("survival", "genotypes"))
    _header("AFTKAT GENE-SET SCAN", config, f"FDR {config.fdr}")
    dataset = load_dataset(config.survival, config.genotypes, config.covariates, config.subpop, config.cause)
    if config.genesets:
        gene_sets = load_gene_sets(config.genesets, dataset.g_names)
    else:
        logger.warning("No gene-set file given; testing all markers as one set")
        gene_sets = GeneSetMap.single(dataset.p)

    scanner = GenomeScanner(config)
    with _progress() as progress:
        task = progress.add_task("Fitting null model...", total=len(gene_sets))
        scanner.prepare(dataset)
        progress.update(task, description="Testing gene sets...")
        report = scanner.scan(dataset, gene_sets, progress=lambda k: progress.advance(task, k))
    paths = report.write(config.out)

    table = Table(title="Scan Summary", box=box.ROUNDED)
    table.add_column("Metric", style="cyan")
    table.add_column("Value", justify="right")
    table.add_row("Gene sets", str(report.m))
    table.add_row("Events (cause of interest)", str(scanner.session.fit.n_events))
    table.add_row("First threshold", f"{report.thresholds[0]:.3e}")
    table.add_row("Significant", f"[green]{report.discoveries}[/green]")
    table.add_row("Flagged", f"[yellow]{len(report.flagged)}[/yellow]")
    console.print(table)
    for name in report.significant:
        console.print(f"  • {name}")
    console.print(f"\n[green]Results saved to:[/green] {paths['results'].parent}/")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    if not config.scenario:
        raise AftkatError("simulate needs --scenario")
    scenario = ScenarioFactory.create(config.scenario, n=config.n, p=config.p,
                                      alternative=config.alternative, effect=config.effect,
                                      **_scenario_params(args.param))
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    dataset = gen_dataset(scenario, rng)
    paths = write_dataset(dataset, config.out)
    gene_sets = GeneSetMap.blocks(dataset.p, args.block_size)
    paths["genesets"] = write_gene_sets(gene_sets, dataset.g_names, Path(config.out) / "genesets.tsv")

    table = Table(title=f"Simulated {scenario.name}", box=box.ROUNDED)
    table.add_column("Metric", style="cyan")
    table.add_column("Value", justify="right")
    for key, value in dataset.summary().items():
        table.add_row(str(key), str(value))
    table.add_row("acceptance", f"{dataset.metadata['acceptance']:.3f}")
    console.print(table)
    console.print(f"[green]Files written to:[/green] {Path(config.out).absolute()}/")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    if not config.scenario:
        raise AftkatError("calibrate needs --scenario")
    scenario = ScenarioFactory.create(config.scenario, n=config.n, p=config.p,
                                      alternative=config.alternative, effect=config.effect,
                                      **_scenario_params(args.param))
    if args.method is None:
        config = config.merged({"method": ",".join(scenario.methods)})
    if config.perturbations is None:
        config = config.merged({"perturbations": CALIBRATION_PERTURBATIONS})
    if config.kernel is None:
        config = config.merged({"kernel": scenario.kernel})
    config.validate()
    _header(f"AFTKAT CALIBRATION: {scenario.name}", config,
            f"{config.replicates} replicates, alternative={config.alternative}")

    opts = TestOptions(config.L, config.L_tilde, config.seed, 1, config.accuracy)
    with _progress() as progress:
        task = progress.add_task("Running replicates...", total=config.replicates)
        report = run_study(scenario, config.methods, config.replicates, config.alphas,
                           master_seed=config.seed, workers=config.workers, opts=opts,
                           kernel=config.kernel_spec(), subpop_kernel=config.hkernel_spec(),
                           progress=lambda k: progress.advance(task, k))
    report.provenance = {**config.provenance(), "scenario": scenario.name,
                         "replicates": config.replicates}
    paths = report.to_tsv(config.out)

    table = Table(title="Rejection Rates", box=box.ROUNDED)
    table.add_column("Method", style="cyan")
    for alpha in report.alphas:
        table.add_column(f"α={alpha:g}", justify="right")
    table.add_column("KS p", justify="right")
    for method in report.methods:
        ks = report.ks.get(method, {}).get("p_value", float("nan"))
        table.add_row(method, *[f"{report.rates[method][a]:.4f} ± {report.standard_errors[method][a]:.4f}"
                                for a in report.alphas], f"{ks:.3g}")
    console.print(table)
    if report.failed:
        console.print(f"[yellow]Failed replicates: {report.failed}[/yellow]")
    console.print(f"[dim]Mean acceptance {report.acceptance:.3f}; mean events "
                  f"{report.mean_events}[/dim]")

    if config.svg or config.png:
        tables = {m: qq_table(report.p_values[m]) for m in report.methods}
        if config.svg:
            render_svg(tables, Path(config.out) / "study_qq.svg", title=scenario.name)
        if config.png:
            render_png(tables, Path(config.out) / "study_qq.png", title=scenario.name)
    console.print(f"\n[green]Results saved to:[/green] {paths['rates'].parent}/")
    return EXIT_OK


def cmd_qq(args: argparse.Namespace) -> int:
    columns = [c.strip() for c in args.columns.split(",")] if args.columns else None
    series = load_pvalues(args.pvalues, columns)
    tables = {name: qq_table(values) for name, values in series.items()}
    frame = qq_frame(tables)
    frame.to_csv(sys.stdout, sep="\t", index=False, float_format="%.6g")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        frame.to_csv(Path(args.out) / "qq.tsv", sep="\t", index=False, float_format="%.6g")

    table = Table(title="Uniformity", box=box.ROUNDED)
    table.add_column("Series", style="cyan")
    table.add_column("N", justify="right")
    table.add_column("KS statistic", justify="right")
    table.add_column("KS p-value", justify="right")
    for name, t in tables.items():
        table.add_row(name, str(t.n), f"{t.ks_statistic:.4f}", f"{t.ks_p_value:.4g}")
    console.print(table)
    if args.svg:
        console.print(f"[green]SVG written to:[/green] {render_svg(tables, args.svg)}")
    if args.png:
        written = render_png(tables, args.png)
        if written:
            console.print(f"[green]PNG written to:[/green] {written}")
    return EXIT_OK


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="Flat key = value configuration file")
    common.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    common.add_argument("--quiet", "-q", action="store_true", help="Warnings and errors only")
    common.add_argument("--seed", type=int, default=None, help="Master seed (default: 0)")
    common.add_argument("--workers", type=int, default=None, help="Parallel workers (default: 1)")
    common.add_argument("--out", "-o", default=None, help="Output directory (default: aftkat_results)")
    return common


def _add_data_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--survival", help="TSV with id, entry, time, status")
    parser.add_argument("--covariates", help="TSV with id and covariate columns")
    parser.add_argument("--genotypes", help="TSV with id and marker columns")
    parser.add_argument("--subpop", help="TSV with id and sub-population variables")
    parser.add_argument("--cause", type=int, default=None, help="Cause of interest (default: 1)")


def _add_test_args(parser: argparse.ArgumentParser, method_help: str) -> None:
    parser.add_argument("--method", default=None, help=method_help)
    parser.add_argument("--kernel", default=None, help="Marker kernel, e.g. ibs, gaussian:rho=0.05")
    parser.add_argument("--hkernel", default=None, help="Sub-population kernel for Rhet/Rchet")
    parser.add_argument("--perturbations", type=int, default=None,
                        help="Perturbations L for the slope estimates (default: 10000)")
    parser.add_argument("--perturbations-a", dest="perturbations_a", type=int, default=None,
                        help="Perturbations for A (default: same as --perturbations)")


def _add_scenario_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scenario", default=None,
                        help=f"Scenario name ({', '.join(ScenarioFactory.list_scenarios())})")
    parser.add_argument("--alternative", action="store_true", default=None,
                        help="Simulate under the alternative")
    parser.add_argument("--n", type=int, default=None, help="Sample size")
    parser.add_argument("--p", type=int, default=None, help="Number of markers")
    parser.add_argument("--effect", type=float, default=None, help="Effect size override")
    parser.add_argument("--param", action="append", metavar="KEY=VALUE",
                        help="Scenario-specific parameter (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aftkat",
        description="Kernel association tests for left-truncated competing-risks data",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Test all markers with the corrected statistic
  %(prog)s test --survival survival.tsv --covariates covariates.tsv --genotypes genotypes.tsv --method Rc

  # Scan gene sets at FDR 0.1
  %(prog)s scan --survival survival.tsv --covariates covariates.tsv --genotypes genotypes.tsv \\
      --genesets genesets.tsv --fdr 0.1 --out scan/

  # Simulate a dataset and estimate empirical size
  %(prog)s simulate --scenario S1_no_het --seed 1 --out sim/
  %(prog)s calibrate --scenario S1_no_het --replicates 500 --alphas 0.05,0.01 --out study/
        """,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = _common_parser()
    sub = parser.add_subparsers(dest="command", required=True)

    p_test = sub.add_parser("test", parents=[common], help="Test all markers jointly")
    _add_data_args(p_test)
    _add_test_args(p_test, "R, Rhet, Rc or Rchet (default: Rc)")
    p_test.set_defaults(func=cmd_test)

    p_scan = sub.add_parser("scan", parents=[common], help="Scan gene sets with FDR control")
    _add_data_args(p_scan)
    _add_test_args(p_scan, "R, Rhet, Rc or Rchet (default: Rc)")
    p_scan.add_argument("--genesets", help="TSV with set and comma-separated markers")
    p_scan.add_argument("--fdr", type=float, default=None, help="FDR target (default: 0.1)")
    p_scan.set_defaults(func=cmd_scan)

    p_sim = sub.add_parser("simulate", parents=[common], help="Write a simulated dataset")
    _add_scenario_args(p_sim)
    p_sim.add_argument("--block-size", type=int, default=DEFAULT_BLOCK_SIZE,
                       help=f"Markers per gene set in genesets.tsv (default: {DEFAULT_BLOCK_SIZE})")
    p_sim.set_defaults(func=cmd_simulate)

    p_cal = sub.add_parser("calibrate", parents=[common], help="Empirical size or power study")
    _add_scenario_args(p_cal)
    _add_test_args(p_cal, "Comma-separated methods (default: the scenario's methods)")
    p_cal.add_argument("--replicates", type=int, default=None, help="Replicates (default: 200)")
    p_cal.add_argument("--alphas", type=_floats, default=None, help="Nominal levels, e.g. 0.05,0.01")
    p_cal.add_argument("--svg", action="store_true", default=None, help="Write a Q-Q SVG")
    p_cal.add_argument("--png", action="store_true", default=None, help="Write a Q-Q PNG (matplotlib)")
    p_cal.set_defaults(func=cmd_calibrate)

    p_qq = sub.add_parser("qq", parents=[common], help="Uniform Q-Q table of p-values")
    p_qq.add_argument("pvalues", help="TSV with one or more p-value columns")
    p_qq.add_argument("--columns", help="Comma-separated columns to use (default: all numeric)")
    p_qq.add_argument("--svg", default=None, help="Write a minimal SVG plot to this path")
    p_qq.add_argument("--png", default=None, help="Write a PNG plot to this path (matplotlib)")
    p_qq.set_defaults(func=cmd_qq)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        code = args.func(args)
    except KeyboardInterrupt:
        console.print("\n[yellow]Interrupted by user[/yellow]")
        code = EXIT_ERROR
    except (AftkatError, OSError) as e:
        console.print(f"[red]Error: {e}[/red]")
        code = EXIT_ERROR
    if argv is None:
        sys.exit(code)
    return code


if __name__ == "__main__":
    main()
