"""Domain types and the error hierarchy shared by every aftkat module."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

# Entry time recorded as 0 means the subject was not left truncated.
NO_TRUNCATION = 0.0


class AftkatError(Exception):
    """Base class for all errors raised by aftkat."""


class IngestionError(AftkatError):
    """Malformed or inconsistent input data."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        if line is not None:
            message = f"{message} at line {line}"
        if path is not None:
            message = f"{message} in {path}"
        super().__init__(message)


class AlignmentError(IngestionError):
    """Subject ids of two inputs cannot be matched one to one."""


class FitError(AftkatError):
    """The null model cannot be evaluated, e.g. an empty risk set at an event."""

    def __init__(self, message: str, time: Optional[float] = None):
        self.time = time
        if time is not None:
            message = f"{message} (residual time {time:.6g})"
        super().__init__(message)


class KernelError(AftkatError):
    pass


class QuadFormError(AftkatError):
    pass


class SlopeEstimationError(AftkatError):
    pass


class SimulationError(AftkatError):
    pass


class ConfigError(AftkatError):
    pass


@dataclass(frozen=True)
class SurvivalRecord:
    """One subject's entry time, observed time and status.

    ``status`` is 0 for a censored observation and ``j >= 1`` for a failure
    from cause ``j``.
    """

    subject_id: str
    entry_time: float
    observed_time: float
    status: int

    def __post_init__(self):
        if not np.isfinite(self.entry_time) or not np.isfinite(self.observed_time):
            raise IngestionError(f"non-finite time for subject {self.subject_id}")
        if self.entry_time < 0 or self.observed_time < 0:
            raise IngestionError(f"negative time for subject {self.subject_id}")
        if self.observed_time <= 0:
            raise IngestionError(f"observed_time must be positive for subject {self.subject_id}")
        if self.observed_time < self.entry_time:
            raise IngestionError("observed_time < entry_time")
        if int(self.status) != self.status or self.status < 0:
            raise IngestionError(f"invalid status {self.status!r} for subject {self.subject_id}")

    @property
    def truncated(self) -> bool:
        return self.entry_time > NO_TRUNCATION

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _frozen_matrix(values: Any, rows: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(rows, -1) if rows else arr.reshape(0, 0)
    if arr.ndim != 2:
        raise IngestionError(f"{name} must be a 2-d matrix")
    if arr.shape[0] != rows:
        raise AlignmentError(f"{name} has {arr.shape[0]} rows, survival table has {rows}")
    if not np.all(np.isfinite(arr)):
        raise IngestionError(f"{name} contains missing or non-finite values")
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Aligned survival table with covariates ``Z``, markers ``G`` and optional ``X``.

    Instances are immutable: matrices are copied and marked read-only so a
    dataset can be shared between worker processes.
    """

    survival: Tuple[SurvivalRecord, ...]
    Z: np.ndarray
    G: np.ndarray
    X: Optional[np.ndarray] = None
    cause_of_interest: int = 1
    z_names: Tuple[str, ...] = ()
    g_names: Tuple[str, ...] = ()
    x_names: Tuple[str, ...] = ()
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        survival = tuple(self.survival)
        n = len(survival)
        ids = [r.subject_id for r in survival]
        if len(set(ids)) != n:
            raise IngestionError("duplicate subject ids in survival table")
        object.__setattr__(self, "survival", survival)
        z = _frozen_matrix(np.zeros((n, 0)) if self.Z is None else self.Z, n, "Z")
        object.__setattr__(self, "Z", z)
        g = _frozen_matrix(self.G, n, "G")
        if g.shape[1] < 1:
            raise IngestionError("marker matrix G has no columns")
        object.__setattr__(self, "G", g)
        if self.X is not None:
            object.__setattr__(self, "X", _frozen_matrix(self.X, n, "X"))
        if self.cause_of_interest < 1:
            raise IngestionError("cause_of_interest must be >= 1")

        for attr, width in (("z_names", z.shape[1]), ("g_names", g.shape[1]),
                            ("x_names", 0 if self.X is None else self.X.shape[1])):
            names = tuple(getattr(self, attr))
            if not names:
                prefix = attr[0].upper()
                names = tuple(f"{prefix}{k + 1}" for k in range(width))
            if len(names) != width:
                raise IngestionError(f"{attr} has {len(names)} entries for {width} columns")
            object.__setattr__(self, attr, names)

        for attr, values in (
            ("_entry", [r.entry_time for r in survival]),
            ("_time", [r.observed_time for r in survival]),
            ("_status", [r.status for r in survival]),
        ):
            arr = np.asarray(values, dtype=float if attr != "_status" else int)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)

    @property
    def n(self) -> int:
        return len(self.survival)

    @property
    def q(self) -> int:
        return self.Z.shape[1]

    @property
    def p(self) -> int:
        return self.G.shape[1]

    @property
    def D(self) -> int:
        return 0 if self.X is None else self.X.shape[1]

    @property
    def ids(self) -> List[str]:
        return [r.subject_id for r in self.survival]

    @property
    def entry(self) -> np.ndarray:
        return self._entry

    @property
    def time(self) -> np.ndarray:
        return self._time

    @property
    def status(self) -> np.ndarray:
        return self._status

    @property
    def events(self) -> np.ndarray:
        """Event indicators for the cause of interest."""
        return (self._status == self.cause_of_interest).astype(float)

    @property
    def log_time(self) -> np.ndarray:
        return np.log(self._time)

    @property
    def log_entry(self) -> np.ndarray:
        """Log entry times, ``-inf`` for untruncated subjects."""
        out = np.full(self.n, -np.inf)
        mask = self._entry > NO_TRUNCATION
        out[mask] = np.log(self._entry[mask])
        return out

    def with_markers(self, columns: Sequence[int]) -> "Dataset":
        cols = list(columns)
        return replace(
            self,
            G=self.G[:, cols],
            g_names=tuple(self.g_names[k] for k in cols),
        )

    def summary(self) -> Dict[str, Any]:
        counts = {int(s): int(np.sum(self._status == s)) for s in np.unique(self._status)}
        return {
            "n": self.n,
            "q": self.q,
            "p": self.p,
            "D": self.D,
            "cause_of_interest": self.cause_of_interest,
            "status_counts": counts,
            "truncated": int(np.sum(self._entry > NO_TRUNCATION)),
        }


@dataclass
class GeneSetMap:
    """Ordered named marker sets, given as column indices into ``G``."""

    sets: List[Tuple[str, List[int]]] = field(default_factory=list)

    def validate(self, p: int) -> None:
        seen = set()
        for name, cols in self.sets:
            if name in seen:
                raise IngestionError(f"duplicate gene set name '{name}'")
            seen.add(name)
            if not cols:
                raise IngestionError(f"gene set '{name}' is empty")
            bad = [c for c in cols if c < 0 or c >= p]
            if bad:
                raise IngestionError(f"gene set '{name}' has column indices out of range: {bad}")

    @classmethod
    def from_marker_names(cls, mapping: Sequence[Tuple[str, Sequence[str]]],
                          marker_names: Sequence[str]) -> "GeneSetMap":
        index = {name: k for k, name in enumerate(marker_names)}
        sets = []
        for set_name, markers in mapping:
            missing = [m for m in markers if m not in index]
            if missing:
                raise IngestionError(f"gene set '{set_name}' names unknown markers: {missing}")
            sets.append((set_name, [index[m] for m in markers]))
        result = cls(sets)
        result.validate(len(marker_names))
        return result

    @classmethod
    def single(cls, p: int, name: str = "all") -> "GeneSetMap":
        return cls([(name, list(range(p)))])

    @classmethod
    def blocks(cls, p: int, size: int, include_all: bool = True) -> "GeneSetMap":
        """Consecutive marker blocks ``block1, block2, ...``, optionally preceded by ``all``."""
        if size < 1:
            raise ValueError("block size must be >= 1")
        sets = [("all", list(range(p)))] if include_all else []
        for k, start in enumerate(range(0, p, size), start=1):
            sets.append((f"block{k}", list(range(start, min(start + size, p)))))
        return cls(sets)

    @property
    def names(self) -> List[str]:
        return [name for name, _ in self.sets]

    def __len__(self) -> int:
        return len(self.sets)

    def __iter__(self) -> Iterator[Tuple[str, List[int]]]:
        return iter(self.sets)

    def to_dict(self) -> Dict[str, List[int]]:
        return {name: list(cols) for name, cols in self.sets}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)
