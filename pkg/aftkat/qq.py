"""Uniform Q-Q tables and figures for null p-values."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .data_loader import read_tsv
from .models import AftkatError, IngestionError

logger = logging.getLogger(__name__)

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    HAS_MATPLOTLIB = True
except ImportError:
    HAS_MATPLOTLIB = False

MIN_POINTS = 10
COLORS = ("#3b82f6", "#ef4444", "#10b981", "#f59e0b", "#8b5cf6", "#6b7280")


@dataclass(frozen=True, eq=False)
class QQTable:
    theoretical: np.ndarray
    observed: np.ndarray
    ks_statistic: float
    ks_p_value: float

    @property
    def n(self) -> int:
        return self.observed.size

    def to_frame(self, name: str = "p") -> pd.DataFrame:
        return pd.DataFrame({
            "series": name,
            "theoretical": self.theoretical,
            "observed": self.observed,
        })


def qq_table(p_values: Sequence[float]) -> QQTable:
    """Sorted p-values against uniform quantiles ``(i - 0.5)/N`` with the KS test."""
    p = np.asarray(p_values, dtype=float).ravel()
    p = p[~np.isnan(p)]
    if p.size < MIN_POINTS:
        raise AftkatError(f"need at least {MIN_POINTS} p-values, got {p.size}")
    if np.any(p < 0) or np.any(p > 1):
        raise AftkatError("p-values must lie in [0, 1]")
    observed = np.sort(p)
    theoretical = (np.arange(1, p.size + 1) - 0.5) / p.size
    ks = stats.kstest(observed, "uniform")
    return QQTable(theoretical, observed, float(ks.statistic), float(ks.pvalue))


def _numeric(column: pd.Series) -> Optional[np.ndarray]:
    try:
        return pd.to_numeric(column.replace("", np.nan)).to_numpy(dtype=float)
    except (TypeError, ValueError):
        return None


def load_pvalues(path, columns: Optional[Sequence[str]] = None) -> Dict[str, np.ndarray]:
    """Read p-value columns from a TSV; without ``columns`` every numeric column
    other than an index-like ``replicate``/``rank`` column is used."""
    path = Path(path)
    if not path.exists():
        raise IngestionError("p-value file not found", path=str(path))
    frame = read_tsv(path).frame
    if columns:
        missing = [c for c in columns if c not in frame.columns]
        if missing:
            raise IngestionError(f"columns {missing} not found", path=str(path))
        series = {c: _numeric(frame[c]) for c in columns}
        bad = [c for c, values in series.items() if values is None]
        if bad:
            raise IngestionError(f"columns {bad} are not numeric", path=str(path))
    else:
        series = {c: _numeric(frame[c]) for c in frame.columns if c not in ("replicate", "rank")}
        series = {c: values for c, values in series.items() if values is not None}
    if not series:
        raise IngestionError("no numeric p-value column", path=str(path))
    return series


def qq_frame(tables: Mapping[str, QQTable]) -> pd.DataFrame:
    return pd.concat([t.to_frame(name) for name, t in tables.items()], ignore_index=True)


def render_svg(tables: Mapping[str, QQTable], path, title: str = "Uniform Q-Q", size: int = 360) -> Path:
    """Write a minimal SVG scatter of observed against expected quantiles with the diagonal."""
    margin = 40
    span = size - 2 * margin

    def sx(v):
        return margin + v * span

    def sy(v):
        return size - margin - v * span

    parts: List[str] = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>',
        f'<rect x="{margin}" y="{margin}" width="{span}" height="{span}" fill="none" stroke="#9ca3af"/>',
        f'<line x1="{sx(0)}" y1="{sy(0)}" x2="{sx(1)}" y2="{sy(1)}" stroke="#111827" '
        f'stroke-dasharray="4 3"/>',
        f'<text x="{size / 2}" y="{margin / 2}" text-anchor="middle" font-size="13">{title}</text>',
        f'<text x="{size / 2}" y="{size - 8}" text-anchor="middle" font-size="11">expected</text>',
        f'<text x="12" y="{size / 2}" text-anchor="middle" font-size="11" '
        f'transform="rotate(-90 12 {size / 2})">observed</text>',
    ]
    for k, (name, table) in enumerate(tables.items()):
        color = COLORS[k % len(COLORS)]
        for t, o in zip(table.theoretical, table.observed):
            parts.append(f'<circle cx="{sx(t):.2f}" cy="{sy(o):.2f}" r="1.8" fill="{color}"/>')
        parts.append(
            f'<text x="{margin + 6}" y="{margin + 14 + 13 * k}" font-size="10" fill="{color}">'
            f'{name} (KS={table.ks_statistic:.3f})</text>'
        )
    parts.append("</svg>")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n")
    return path


def render_png(tables: Mapping[str, QQTable], path, title: str = "Uniform Q-Q") -> Optional[Path]:
    if not HAS_MATPLOTLIB:
        logger.warning("matplotlib not installed; skipping PNG Q-Q plot")
        return None
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot([0, 1], [0, 1], color="black", linestyle="--", linewidth=1)
    for k, (name, table) in enumerate(tables.items()):
        ax.scatter(table.theoretical, table.observed, s=6, color=COLORS[k % len(COLORS)],
                   label=f"{name} (KS={table.ks_statistic:.3f})")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("expected")
    ax.set_ylabel("observed")
    ax.set_title(title)
    ax.legend(loc="upper left", fontsize=8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path
