"""Similarity kernels for markers and sub-population variables, their
heterogeneity-weighted combination, and low-rank factorization."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from .models import KernelError

logger = logging.getLogger(__name__)

KERNEL_KINDS = ("linear", "ibs", "gaussian", "laplacian", "polynomial", "identity")

RANK_TOL = 1e-8
NEGATIVE_TOL = 1e-6


@dataclass(frozen=True)
class KernelSpec:
    """Kernel kind plus its parameters.

    ``rho`` defaults to ``1/p`` for gaussian and 1 for polynomial; ``degree``
    only applies to the polynomial kernel.
    """

    kind: str = "ibs"
    rho: Optional[float] = None
    degree: int = 2
    block_size: int = 4096

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise KernelError(f"unknown kernel '{self.kind}' (choose from {', '.join(KERNEL_KINDS)})")
        if self.rho is not None:
            if not np.isfinite(self.rho) or self.rho < 0 or (self.kind == "gaussian" and self.rho == 0):
                raise KernelError(f"invalid rho={self.rho} for {self.kind} kernel")
        if int(self.degree) != self.degree or self.degree < 1:
            raise KernelError(f"invalid polynomial degree {self.degree}")
        if self.block_size < 1:
            raise KernelError("block_size must be positive")

    @classmethod
    def parse(cls, text: str) -> "KernelSpec":
        """Parse ``kind[:key=value,...]``, e.g. ``gaussian:rho=0.05``."""
        kind, _, rest = text.strip().partition(":")
        params: Dict[str, Any] = {}
        for item in filter(None, (s.strip() for s in rest.split(","))):
            key, sep, value = item.partition("=")
            if not sep:
                raise KernelError(f"malformed kernel parameter '{item}' in '{text}'")
            key = key.strip()
            try:
                if key == "rho":
                    params["rho"] = float(value)
                elif key in ("d", "degree"):
                    params["degree"] = int(value)
                elif key == "block":
                    params["block_size"] = int(value)
                else:
                    raise KernelError(f"unknown kernel parameter '{key}'")
            except ValueError:
                raise KernelError(f"invalid value for '{key}' in '{text}'")
        return cls(kind=kind.strip().lower(), **params)

    def resolved(self, p: int) -> Dict[str, Any]:
        params: Dict[str, Any] = {"kind": self.kind}
        if self.kind == "gaussian":
            params["rho"] = self.rho if self.rho is not None else 1.0 / p
        elif self.kind == "polynomial":
            params["rho"] = self.rho if self.rho is not None else 1.0
            params["degree"] = self.degree
        return params

    def __str__(self) -> str:
        parts = []
        if self.rho is not None:
            parts.append(f"rho={self.rho:g}")
        if self.kind == "polynomial":
            parts.append(f"d={self.degree}")
        return self.kind + (":" + ",".join(parts) if parts else "")


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Symmetric PSD matrix ``M`` with factor ``E1`` such that ``E1.T @ E1 ~= M``."""

    matrix: np.ndarray
    factor: np.ndarray
    eigenvalues: np.ndarray
    params: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, params: Optional[Dict[str, Any]] = None) -> "KernelMatrix":
        matrix = np.asarray(matrix, dtype=float)
        factor, eigenvalues = factorize(matrix)
        matrix = (matrix + matrix.T) / 2.0
        for arr in (matrix, factor, eigenvalues):
            arr.setflags(write=False)
        return cls(matrix, factor, eigenvalues, dict(params or {}))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def rank(self) -> int:
        return self.factor.shape[0]


def factorize(M: np.ndarray, rank_tol: float = RANK_TOL) -> Tuple[np.ndarray, np.ndarray]:
    """Rank-revealing symmetric factorization ``M = E1.T @ E1``.

    Returns ``(E1, eigenvalues)`` with eigenvalues in decreasing order;
    components at or below ``rank_tol * max eigenvalue`` are dropped.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise KernelError(f"kernel matrix must be square, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if M.size and np.max(np.abs(M - M.T)) > 1e-10 * scale:
        raise KernelError("kernel matrix is not symmetric")
    n = M.shape[0]
    values, vectors = np.linalg.eigh((M + M.T) / 2.0)
    top = values.max() if n else 0.0
    if top <= 0:
        if n and values.min() < -NEGATIVE_TOL * scale:
            raise KernelError("kernel matrix has a materially negative spectrum")
        return np.zeros((0, n)), np.zeros(0)
    if values.min() < -NEGATIVE_TOL * top:
        raise KernelError(
            f"kernel matrix is not positive semidefinite (eigenvalue {values.min():.3e}, max {top:.3e})"
        )
    keep = np.flatnonzero(values > rank_tol * top)[::-1]
    kept = values[keep]
    factor = np.sqrt(kept)[:, None] * vectors[:, keep].T
    return factor, kept


def _ibs(G: np.ndarray, block_size: int) -> np.ndarray:
    if np.any(G < 0) or np.any(G > 2):
        raise KernelError("IBS kernel requires genotype values in [0, 2]")
    n, p = G.shape
    total = np.zeros((n, n))
    if np.all(G == np.round(G)):
        # |a - b| = a + b - 2 min(a, b) with min(a, b) = [a>=1][b>=1] + [a>=2][b>=2]
        for start in range(0, p, block_size):
            block = G[:, start:start + block_size]
            u1 = (block >= 1).astype(float)
            u2 = (block >= 2).astype(float)
            r = block.sum(axis=1)
            total += r[:, None] + r[None, :] - 2.0 * (u1 @ u1.T + u2 @ u2.T)
    else:
        for start in range(0, p, block_size):
            block = G[:, start:start + block_size]
            total += cdist(block, block, metric="cityblock")
    return (2.0 * p - total) / (2.0 * p)


def _laplacian(G: np.ndarray) -> Tuple[np.ndarray, Dict[str, Any]]:
    sd = G.std(axis=0, ddof=1) if G.shape[0] > 1 else np.zeros(G.shape[1])
    keep = sd > 0
    dropped = int(np.sum(~keep))
    if dropped:
        logger.warning(f"Laplacian kernel: dropped {dropped} zero-variance column(s)")
    if not np.any(keep):
        raise KernelError("laplacian kernel: every column has zero variance")
    w = 1.0 / sd[keep]
    upsilon = float(w.sum())
    dist = squareform(pdist(G[:, keep] * w, metric="cityblock"))
    return np.exp(-dist / upsilon), {"dropped_columns": dropped, "upsilon": upsilon}


def _identity(X: np.ndarray) -> np.ndarray:
    _, labels = np.unique(X, axis=0, return_inverse=True)
    labels = np.asarray(labels).reshape(-1)
    return (labels[:, None] == labels[None, :]).astype(float)


def kernel_values(spec: KernelSpec, G: np.ndarray) -> Tuple[np.ndarray, Dict[str, Any]]:
    """Evaluate the kernel on the rows of ``G`` without factorizing."""
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[1] < 1:
        raise KernelError("kernel input must be an n x k matrix with k >= 1")
    if not np.all(np.isfinite(G)):
        raise KernelError("kernel input contains non-finite values")
    p = G.shape[1]
    params = spec.resolved(p)

    if spec.kind == "linear":
        M = G @ G.T
    elif spec.kind == "ibs":
        M = _ibs(G, spec.block_size)
    elif spec.kind == "gaussian":
        M = np.exp(-params["rho"] * squareform(pdist(G, metric="sqeuclidean")))
    elif spec.kind == "laplacian":
        M, extra = _laplacian(G)
        params.update(extra)
    elif spec.kind == "polynomial":
        M = (params["rho"] + G @ G.T) ** params["degree"]
    else:
        M = _identity(G)
    return (M + M.T) / 2.0, params


def build_kernel(spec: KernelSpec, G: np.ndarray) -> KernelMatrix:
    M, params = kernel_values(spec, G)
    kernel = KernelMatrix.from_matrix(M, params)
    logger.debug(f"Built {spec} kernel: n={kernel.n}, rank={kernel.rank}")
    return kernel


def build_subpop_kernel(spec: KernelSpec, X: np.ndarray) -> KernelMatrix:
    """Sub-population similarity ``H``; the identity kind compares whole rows."""
    return build_kernel(spec, X)


def heterogeneity_weight(K: KernelMatrix, H: KernelMatrix) -> KernelMatrix:
    """``W = (J + H) * K`` (Hadamard product)."""
    if K.matrix.shape != H.matrix.shape:
        raise KernelError(f"kernel shapes differ: {K.matrix.shape} vs {H.matrix.shape}")
    W = (1.0 + H.matrix) * K.matrix
    params = {"K": K.params, "H": H.params}
    return KernelMatrix.from_matrix(W, params)
