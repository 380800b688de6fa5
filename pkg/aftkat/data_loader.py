"""TSV ingestion, subject alignment and dataset export."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .models import (
    AlignmentError,
    Dataset,
    GeneSetMap,
    IngestionError,
    SurvivalRecord,
)

logger = logging.getLogger(__name__)

SURVIVAL_COLUMNS = ("id", "entry", "time", "status")
GENESET_COLUMNS = ("set", "markers")

PathLike = Union[str, Path]


@dataclass
class LabeledMatrix:
    """Numeric matrix with its subject ids and column names."""

    values: np.ndarray
    columns: List[str]
    ids: List[str]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def aligned_to(self, ids: Sequence[str], path: Optional[str] = None) -> "LabeledMatrix":
        """Reorder rows to follow ``ids``; every id must appear exactly once."""
        position = {sid: k for k, sid in enumerate(self.ids)}
        if len(position) != len(self.ids):
            raise AlignmentError("duplicate subject ids", path=path)
        unknown = [sid for sid in self.ids if sid not in set(ids)]
        if unknown:
            raise AlignmentError(f"id '{unknown[0]}' not present in survival table", path=path)
        missing = [sid for sid in ids if sid not in position]
        if missing:
            raise AlignmentError(f"id '{missing[0]}' from survival table has no row", path=path)
        order = [position[sid] for sid in ids]
        return LabeledMatrix(self.values[order], list(self.columns), list(ids))


@dataclass
class TsvTable:
    """A TSV body with the file line number of its header and of every data row."""

    frame: pd.DataFrame
    header_line: int
    lines: List[int]


def read_tsv(path: PathLike) -> TsvTable:
    """Read a tab-separated file, skipping blank lines and lines that start with ``#``.

    Cells are kept verbatim, so ``#`` inside a cell is data.
    """
    path = Path(path)
    if not path.exists():
        raise IngestionError("file not found", path=str(path))
    try:
        text = path.read_text(encoding="utf-8").splitlines()
    except UnicodeDecodeError as e:
        raise IngestionError(f"not UTF-8 text: {e}", path=str(path))
    skip = [i for i, line in enumerate(text) if not line.strip() or line.startswith("#")]
    skipped = set(skip)
    kept = [i + 1 for i in range(len(text)) if i not in skipped]
    if not kept:
        raise IngestionError("file is empty", path=str(path))
    try:
        frame = pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False, skiprows=skip,
                            skip_blank_lines=False, quoting=csv.QUOTE_NONE, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise IngestionError("file is empty", path=str(path))
    except pd.errors.ParserError as e:
        raise IngestionError(f"malformed TSV: {e}", path=str(path))
    if len(frame) != len(kept) - 1:
        raise IngestionError("malformed TSV: rows do not match data lines", path=str(path))
    return TsvTable(frame.fillna(""), kept[0], kept[1:])


def _to_float(cell: str, what: str, line: int, path: str) -> float:
    try:
        value = float(cell)
    except (TypeError, ValueError):
        raise IngestionError(f"non-numeric {what} '{cell}'", path=path, line=line)
    if not np.isfinite(value):
        raise IngestionError(f"missing or non-finite {what}", path=path, line=line)
    return value


def load_survival(path: PathLike) -> List[SurvivalRecord]:
    """Read a survival table with header ``id entry time status``.

    An entry time of 0 marks an untruncated subject. Row order is preserved.
    """
    table = read_tsv(path)
    frame = table.frame
    where = str(path)
    if tuple(frame.columns) != SURVIVAL_COLUMNS:
        raise IngestionError(
            f"expected header {'/'.join(SURVIVAL_COLUMNS)}, got {'/'.join(frame.columns)}",
            path=where, line=table.header_line,
        )

    records: List[SurvivalRecord] = []
    seen: Dict[str, int] = {}
    for line, row in zip(table.lines, frame.itertuples(index=False)):
        sid, entry, time, status = (str(v).strip() for v in row)
        if not sid:
            raise IngestionError("empty subject id", path=where, line=line)
        if sid in seen:
            raise IngestionError(f"duplicate id '{sid}' (first seen at line {seen[sid]})",
                                 path=where, line=line)
        seen[sid] = line
        a = _to_float(entry, "entry", line, where)
        t = _to_float(time, "time", line, where)
        try:
            code = int(status)
        except ValueError:
            raise IngestionError(f"invalid status '{status}'", path=where, line=line)
        if a < 0 or t < 0:
            raise IngestionError("negative time", path=where, line=line)
        if t < a:
            raise IngestionError("observed_time < entry_time", path=where, line=line)
        try:
            records.append(SurvivalRecord(sid, a, t, code))
        except IngestionError as e:
            raise IngestionError(str(e), path=where, line=line)

    logger.debug(f"Loaded {len(records)} survival records from {path}")
    return records


def load_matrix(path: PathLike, expected_rows: Optional[int] = None,
                ids: Optional[Sequence[str]] = None) -> LabeledMatrix:
    """Read a subject-by-column numeric TSV whose first column is the subject id.

    When ``ids`` is given the rows are aligned to that order.
    """
    table = read_tsv(path)
    frame = table.frame
    where = str(path)
    if frame.shape[1] < 1:
        raise IngestionError("missing id column", path=where, line=table.header_line)
    if expected_rows is not None and len(frame) != expected_rows:
        raise AlignmentError(f"expected {expected_rows} rows, found {len(frame)}", path=where)

    row_ids = [str(v).strip() for v in frame.iloc[:, 0]]
    columns = [str(c) for c in frame.columns[1:]]
    values = np.empty((len(frame), len(columns)), dtype=float)
    for i, row in enumerate(frame.iloc[:, 1:].itertuples(index=False)):
        for k, cell in enumerate(row):
            values[i, k] = _to_float(str(cell).strip(), f"cell in column '{columns[k]}'",
                                     table.lines[i], where)

    matrix = LabeledMatrix(values, columns, row_ids)
    if ids is not None:
        matrix = matrix.aligned_to(ids, path=where)
    return matrix


def assemble(
    survival: Sequence[SurvivalRecord],
    Z: Union[LabeledMatrix, np.ndarray, None],
    G: Union[LabeledMatrix, np.ndarray],
    X: Union[LabeledMatrix, np.ndarray, None] = None,
    cause: int = 1,
    metadata: Optional[dict] = None,
) -> Dataset:
    """Combine validated pieces into a :class:`Dataset` in survival-table order."""
    ids = [r.subject_id for r in survival]

    def unpack(matrix, label):
        if matrix is None:
            return None, ()
        if isinstance(matrix, LabeledMatrix):
            matrix = matrix.aligned_to(ids) if matrix.ids != ids else matrix
            return matrix.values, tuple(matrix.columns)
        arr = np.asarray(matrix, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != len(ids):
            raise AlignmentError(f"{label} has {arr.shape[0] if arr.ndim else 0} rows, "
                                 f"survival table has {len(ids)}")
        return arr, ()

    z_values, z_names = unpack(Z, "Z")
    g_values, g_names = unpack(G, "G")
    x_values, x_names = unpack(X, "X")
    if g_values is None or g_values.shape[1] == 0:
        raise IngestionError("no markers to test")

    dataset = Dataset(
        survival=tuple(survival),
        Z=z_values if z_values is not None else np.zeros((len(ids), 0)),
        G=g_values,
        X=x_values,
        cause_of_interest=cause,
        z_names=z_names,
        g_names=g_names,
        x_names=x_names,
        metadata=dict(metadata or {}),
    )
    if dataset.events.sum() == 0:
        logger.warning(f"Cause {cause} not present among observed statuses")
    return dataset


def load_dataset(
    survival: PathLike,
    genotypes: PathLike,
    covariates: Optional[PathLike] = None,
    subpop: Optional[PathLike] = None,
    cause: int = 1,
) -> Dataset:
    records = load_survival(survival)
    ids = [r.subject_id for r in records]
    Z = load_matrix(covariates, len(ids), ids) if covariates else None
    G = load_matrix(genotypes, len(ids), ids)
    X = load_matrix(subpop, len(ids), ids) if subpop else None
    dataset = assemble(records, Z, G, X, cause)
    logger.info(f"Loaded dataset: n={dataset.n}, q={dataset.q}, p={dataset.p}, D={dataset.D}")
    return dataset


def _matrix_frame(ids: Sequence[str], values: np.ndarray, names: Sequence[str]) -> pd.DataFrame:
    frame = pd.DataFrame(np.asarray(values), columns=list(names))
    frame.insert(0, "id", list(ids))
    return frame


def write_dataset(dataset: Dataset, out_dir: PathLike) -> Dict[str, Path]:
    """Write the dataset as survival/covariates/genotypes(/subpop) TSVs.

    Floats are written at full precision so re-loading reproduces the matrices
    exactly.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "survival": out / "survival.tsv",
        "covariates": out / "covariates.tsv",
        "genotypes": out / "genotypes.tsv",
    }
    survival = pd.DataFrame({
        "id": dataset.ids,
        "entry": [repr(float(v)) for v in dataset.entry],
        "time": [repr(float(v)) for v in dataset.time],
        "status": dataset.status.astype(int),
    })
    survival.to_csv(paths["survival"], sep="\t", index=False)
    _matrix_frame(dataset.ids, dataset.Z, dataset.z_names).to_csv(
        paths["covariates"], sep="\t", index=False, float_format="%.17g")
    _matrix_frame(dataset.ids, dataset.G, dataset.g_names).to_csv(
        paths["genotypes"], sep="\t", index=False, float_format="%.17g")
    if dataset.X is not None:
        paths["subpop"] = out / "subpop.tsv"
        _matrix_frame(dataset.ids, dataset.X, dataset.x_names).to_csv(
            paths["subpop"], sep="\t", index=False, float_format="%.17g")
    logger.info(f"Dataset written to {out}")
    return paths


def load_gene_sets(path: PathLike, marker_names: Sequence[str]) -> GeneSetMap:
    """Read a ``set``/``markers`` TSV; markers are comma-separated column names."""
    table = read_tsv(path)
    frame = table.frame
    where = str(path)
    if tuple(frame.columns) != GENESET_COLUMNS:
        raise IngestionError(f"expected header {'/'.join(GENESET_COLUMNS)}", path=where,
                             line=table.header_line)
    mapping = []
    for line, (name, markers) in zip(table.lines, frame.itertuples(index=False)):
        members = [m.strip() for m in str(markers).split(",") if m.strip()]
        if not members:
            raise IngestionError(f"gene set '{name}' is empty", path=where, line=line)
        mapping.append((str(name).strip(), members))
    try:
        return GeneSetMap.from_marker_names(mapping, marker_names)
    except IngestionError as e:
        raise IngestionError(str(e), path=where)


def write_gene_sets(gene_sets: GeneSetMap, marker_names: Sequence[str], path: PathLike) -> Path:
    path = Path(path)
    frame = pd.DataFrame({
        "set": gene_sets.names,
        "markers": [",".join(marker_names[c] for c in cols) for _, cols in gene_sets],
    })
    frame.to_csv(path, sep="\t", index=False)
    return path
