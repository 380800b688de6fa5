"""Run configuration: defaults, a flat ``key = value`` file and command-line overrides."""

from __future__ import annotations

import configparser
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from . import __version__
from .assoc_tests import TestMethod
from .kernels import KernelSpec
from .models import AftkatError, ConfigError

logger = logging.getLogger(__name__)

_SECTION = "aftkat"
_PATH_FIELDS = ("survival", "covariates", "genotypes", "genesets", "subpop")

DEFAULT_KERNEL = "ibs"
DEFAULT_PERTURBATIONS = 10000
CALIBRATION_PERTURBATIONS = 1000


@dataclass
class ScanConfig:
    survival: Optional[str] = None
    covariates: Optional[str] = None
    genotypes: Optional[str] = None
    genesets: Optional[str] = None
    subpop: Optional[str] = None
    method: str = "Rc"
    kernel: Optional[str] = None
    hkernel: Optional[str] = None
    cause: int = 1
    fdr: float = 0.1
    perturbations: Optional[int] = None
    perturbations_a: Optional[int] = None
    seed: int = 0
    workers: int = 1
    accuracy: float = 1e-6
    out: str = "aftkat_results"
    log_level: str = "INFO"
    svg: bool = False
    png: bool = False
    scenario: Optional[str] = None
    alternative: bool = False
    replicates: int = 200
    alphas: List[float] = field(default_factory=lambda: [0.05])
    n: Optional[int] = None
    p: Optional[int] = None
    effect: Optional[float] = None

    @property
    def L(self) -> int:
        return self.perturbations if self.perturbations is not None else DEFAULT_PERTURBATIONS

    @property
    def L_tilde(self) -> int:
        return self.perturbations_a if self.perturbations_a is not None else self.L

    @property
    def methods(self) -> List[TestMethod]:
        """``method`` may list several comma-separated methods (calibration studies)."""
        return [TestMethod.parse(m) for m in self.method.split(",") if m.strip()]

    @property
    def test_method(self) -> TestMethod:
        methods = self.methods
        if len(methods) != 1:
            raise ConfigError(f"exactly one method expected, got '{self.method}'")
        return methods[0]

    def kernel_spec(self) -> KernelSpec:
        return KernelSpec.parse(self.kernel or DEFAULT_KERNEL)

    def hkernel_spec(self) -> Optional[KernelSpec]:
        return KernelSpec.parse(self.hkernel) if self.hkernel else None

    def merged(self, overrides: Dict[str, Any]) -> "ScanConfig":
        """Copy with every non-``None`` override applied; unknown keys are ignored."""
        names = {f.name for f in fields(self)}
        updates = {k: v for k, v in overrides.items() if v is not None and k in names}
        return replace(self, **updates)

    def validate(self, require: Sequence[str] = ()) -> "ScanConfig":
        for name in require:
            if getattr(self, name) is None:
                raise ConfigError(f"missing required setting '{name}'")
        for name in _PATH_FIELDS:
            value = getattr(self, name)
            if value is not None and not Path(value).exists():
                raise ConfigError(f"{name} file not found: {value}")
        if not 0.0 < self.fdr < 1.0:
            raise ConfigError(f"fdr must lie in (0, 1), got {self.fdr}")
        for alpha in self.alphas:
            if not 0.0 < alpha < 1.0:
                raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
        if self.L < 1 or self.L_tilde < 1:
            raise ConfigError("perturbations must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        try:
            methods = self.methods
            self.kernel_spec()
            self.hkernel_spec()
        except AftkatError as e:
            raise ConfigError(str(e)) from e
        if not methods:
            raise ConfigError("no test method given")
        het = [m.value for m in methods if m.heterogeneity]
        if het and self.hkernel is None and self.scenario is None:
            raise ConfigError(f"method {het[0]} requires --hkernel")
        if het and self.survival is not None and self.subpop is None:
            raise ConfigError(f"method {het[0]} requires --subpop")
        if not het and self.hkernel is not None:
            logger.warning(f"hkernel is ignored by method {self.method}")
        return self

    def provenance(self) -> Dict[str, Any]:
        return {
            "tool": f"aftkat {__version__}",
            "seed": self.seed,
            "L": self.L,
            "L_tilde": self.L_tilde,
            "kernel": self.kernel or DEFAULT_KERNEL,
            "hkernel": self.hkernel or ".",
            "method": self.method,
            "cause": self.cause,
        }

    def to_dict(self) -> Dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if v is not None}


def _coerce(name: str, raw: str, annotation: str) -> Any:
    text = raw.strip()
    try:
        if "List[float]" in annotation:
            return [float(v) for v in text.replace(",", " ").split()]
        if "bool" in annotation:
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if "int" in annotation:
            return int(text)
        if "float" in annotation:
            return float(text)
    except ValueError as e:
        raise ConfigError(f"invalid value for '{name}': {raw!r}") from e
    return text


def load_config(path) -> ScanConfig:
    """Read a flat config file; keys are ``ScanConfig`` field names."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string(f"[{_SECTION}]\n" + path.read_text())
    except configparser.Error as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e

    defaults = ScanConfig()
    known = {f.name: str(f.type) for f in fields(ScanConfig)}
    values: Dict[str, Any] = {}
    for key, raw in parser.items(_SECTION):
        name = key.replace("-", "_")
        if name not in known:
            raise ConfigError(f"unknown key '{key}' in {path}")
        values[name] = _coerce(name, raw, known[name])
    logger.debug(f"Loaded {len(values)} settings from {path}")
    return defaults.merged(values)
