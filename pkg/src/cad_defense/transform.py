"""Orthonormal DCT sensing model and k-sparse approximation helpers.

The pipeline observes pixel-domain signals y = A(xhat + e) where A is the
inverse of the real orthonormal DCT-II analysis transform F.  A is applied
as an explicit n-by-n matrix, so one application costs O(n^2); that cost is
deliberate and is what the per-iteration complexity accounting assumes.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

__all__ = [
    "dct_matrix",
    "SensingOperator",
    "analyze",
    "synthesize",
    "top_k",
    "best_k_term_error",
]


@lru_cache(maxsize=16)
def dct_matrix(n: int) -> np.ndarray:
    """Return the n-by-n orthonormal DCT-II analysis matrix F.

    Row j holds the cosine atom sqrt(2/n) * cos(pi * j * (2i + 1) / (2n)),
    with the j = 0 row scaled by sqrt(1/n) so that F F^T = I.
    """
    if n < 1:
        raise ValueError(f"transform size must be >= 1, got {n}")
    i = np.arange(n)
    j = i[:, None]
    mat = np.cos(np.pi * j * (2 * i + 1) / (2.0 * n)) * np.sqrt(2.0 / n)
    mat[0] *= np.sqrt(0.5)
    mat.setflags(write=False)
    return mat


def _check_vector(x, n: int, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != n:
        raise ValueError(f"{name} must be a length-{n} vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")
    return x


class SensingOperator:
    """Synthesis operator A = F^{-1} for the DCT basis, optionally row-subsampled.

    Parameters
    ----------
    n : int
        Ambient dimension of the spectral domain.
    rows : array_like of int, optional
        Measurement rows kept from the full operator.  None keeps all n rows,
        in which case A is orthonormal and analysis is its exact inverse.
    kind : str
        Basis descriptor; only "dct" is supported.
    """

    def __init__(self, n: int, rows=None, kind: str = "dct"):
        if kind != "dct":
            raise ValueError(f"unsupported operator kind {kind!r}")
        self.n = int(n)
        self.kind = kind
        self._analysis = dct_matrix(self.n)          # F, shape (n, n)
        if rows is None:
            self.rows = None
            self._matrix = self._analysis.T          # full A = F^T
        else:
            rows = np.asarray(rows, dtype=np.intp)
            if rows.ndim != 1 or rows.size == 0:
                raise ValueError("rows must be a non-empty 1-D index array")
            if np.unique(rows).size != rows.size:
                raise ValueError("rows must be distinct")
            if rows.min() < 0 or rows.max() >= self.n:
                raise ValueError(f"rows must lie in [0, {self.n})")
            self.rows = rows.copy()
            self._matrix = self._analysis.T[self.rows]
        self._matrix.setflags(write=False)

    @property
    def m(self) -> int:
        """Number of measurement rows."""
        return self._matrix.shape[0]

    @property
    def is_full(self) -> bool:
        return self.rows is None

    @property
    def matrix(self) -> np.ndarray:
        """The realized measurement matrix A (or its row restriction)."""
        return self._matrix

    def analyze(self, s) -> np.ndarray:
        """Spectral coefficients F s of a full-length signal s."""
        s = _check_vector(s, self.n, "signal")
        return self._analysis @ s

    def synthesize(self, c) -> np.ndarray:
        """Signal A c, restricted to the operator's measurement rows."""
        c = _check_vector(c, self.n, "coefficients")
        return self._matrix @ c

    def adjoint(self, v) -> np.ndarray:
        """Adjoint application A^* v mapping measurements back to spectra."""
        v = _check_vector(v, self.m, "measurements")
        return self._matrix.T @ v

    def columns(self, idx) -> np.ndarray:
        """Column submatrix A[:, idx] for least squares on a candidate support."""
        idx = np.asarray(idx, dtype=np.intp)
        return self._matrix[:, idx]

    def __repr__(self) -> str:
        sub = "full" if self.is_full else f"{self.m} rows"
        return f"SensingOperator(n={self.n}, {sub}, kind={self.kind!r})"


def analyze(s, op: SensingOperator) -> np.ndarray:
    """Forward transform F s; energy-preserving since F is orthonormal."""
    return op.analyze(s)


def synthesize(c, op: SensingOperator) -> np.ndarray:
    """Inverse transform A c restricted to op's measurement rows."""
    return op.synthesize(c)


def top_k(c, k: int) -> np.ndarray:
    """Best k-term approximation: keep the k largest-magnitude entries.

    Ties are broken toward the lower index.  k = 0 returns the zero vector
    and k >= len(c) returns a copy of c.
    """
    c = np.asarray(c, dtype=np.float64)
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    if k >= c.shape[0]:
        return c.copy()
    out = np.zeros_like(c)
    if k == 0:
        return out
    # stable sort on negated magnitude keeps lower indices first among ties
    order = np.argsort(-np.abs(c), kind="stable")[:k]
    out[order] = c[order]
    return out


def best_k_term_error(c, k: int) -> float:
    """l1 norm of the k-term approximation tail; zero iff c is k-sparse."""
    c = np.asarray(c, dtype=np.float64)
    return float(np.abs(c - top_k(c, k)).sum())
