"""Numerical kernels shared by the baseline and factorization solvers.

Dense matrices are plain 2-D ``float64`` numpy arrays. Partially observed
matrices are :class:`MaskedMatrix` (coordinate triplets over a fixed grid),
which doubles as the entry-sampling operator ``A``: ``A(X)`` gathers ``X`` at
the observed cells and ``A^T`` scatters values back with zeros elsewhere.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import NumericalError

# Largest eigenvalue of A^T A for an entry-sampling operator. A^T A is a 0/1
# diagonal projection on vec(X), so this is exactly 1 whenever any entry is
# observed.
SAMPLING_BETA = 1.0


@dataclass(frozen=True, eq=False)
class MaskedMatrix:
    """Values observed at unique ``(rows[i], cols[i])`` cells of a ``shape`` grid."""

    shape: tuple[int, int]
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        m, n = (int(s) for s in self.shape)
        if m < 1 or n < 1:
            raise ValueError(f"shape must be positive, got {self.shape}")
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        cols = np.asarray(self.cols, dtype=np.int64).ravel()
        values = np.asarray(self.values, dtype=np.float64).ravel()
        if not len(rows) == len(cols) == len(values):
            raise ValueError("rows, cols and values must have equal length")
        if len(rows):
            if rows.min() < 0 or rows.max() >= m or cols.min() < 0 or cols.max() >= n:
                raise ValueError(f"entry index outside {m}x{n} grid")
            if len(np.unique(rows * n + cols)) != len(rows):
                raise ValueError("duplicate (row, col) entries")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        for arr in (rows, cols, values):
            arr.flags.writeable = False
        object.__setattr__(self, "shape", (m, n))
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "values", values)

    @property
    def nnz(self) -> int:
        return len(self.values)

    def with_values(self, values) -> "MaskedMatrix":
        """Same support, new values; skips re-validation of the support."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.values.shape:
            raise ValueError("values length does not match support")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        values.flags.writeable = False
        new = object.__new__(MaskedMatrix)
        object.__setattr__(new, "shape", self.shape)
        object.__setattr__(new, "rows", self.rows)
        object.__setattr__(new, "cols", self.cols)
        object.__setattr__(new, "values", values)
        if "_csr_layout" in self.__dict__:
            new.__dict__["_csr_layout"] = self.__dict__["_csr_layout"]
        return new

    @cached_property
    def _csr_layout(self):
        order = np.lexsort((self.cols, self.rows))
        indptr = np.searchsorted(self.rows[order], np.arange(self.shape[0] + 1))
        return order, self.cols[order].astype(np.int32), indptr.astype(np.int32)

    def scatter(self, values=None) -> sp.csr_matrix:
        """``A^T(values)`` as a sparse matrix (defaults to the stored values)."""
        values = self.values if values is None else values
        order, indices, indptr = self._csr_layout
        return sp.csr_matrix((values[order], indices, indptr), shape=self.shape)

    def to_dense(self, fill=0.0) -> np.ndarray:
        out = np.full(self.shape, fill, dtype=np.float64)
        out[self.rows, self.cols] = self.values
        return out

    def gather(self, X) -> np.ndarray:
        """``A(X)``: entries of a dense matrix at the observed cells."""
        return np.asarray(X)[self.rows, self.cols]

    def row_counts(self) -> np.ndarray:
        return np.bincount(self.rows, minlength=self.shape[0])

    def col_counts(self) -> np.ndarray:
        return np.bincount(self.cols, minlength=self.shape[1])


def sampling_operator(obs: MaskedMatrix) -> sp.csr_matrix:
    """Explicit ``|Omega| x (M*N)`` matrix of ``A`` acting on row-major ``vec(X)``."""
    m, n = obs.shape
    data = np.ones(obs.nnz)
    return sp.csr_matrix((data, (np.arange(obs.nnz), obs.rows * n + obs.cols)),
                         shape=(obs.nnz, m * n))


def _check_factors(obs: MaskedMatrix, U, V):
    m, n = obs.shape
    if U.ndim != 2 or V.ndim != 2:
        raise ValueError("U and V must be 2-D")
    if U.shape[0] != m or V.shape[1] != n or U.shape[1] != V.shape[0]:
        raise ValueError(f"factor shapes {U.shape} x {V.shape} do not match "
                         f"observed grid {obs.shape}")


def masked_product(obs: MaskedMatrix, U, V) -> np.ndarray:
    """``A(UV)`` as a vector aligned with ``obs.values``."""
    U = np.asarray(U, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    _check_factors(obs, U, V)
    # one GEMM then a gather beats per-entry dot products by ~5x at MovieLens
    # sizes; OpenBLAS splits GEMM over output blocks only, so each entry's
    # reduction order does not depend on the thread count.
    return (U @ V)[obs.rows, obs.cols]


def masked_residual(obs: MaskedMatrix, U, V) -> MaskedMatrix:
    """``Y - A(UV)`` on the observed cells of ``obs``."""
    return obs.with_values(obs.values - masked_product(obs, U, V))


def spectral_norm_sq(G, tol=1e-12, max_iter=10_000) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Named for its use on Gram matrices (``U^T U``), whose top eigenvalue is the
    squared spectral norm of ``U``.

    Parameters
    ----------
    G : (n, n) array_like
        Symmetric positive semidefinite matrix.
    tol : float
        Stop when successive Rayleigh quotients differ by at most ``tol``
        relative to the current one.
    max_iter : int
        Iteration cap.

    Notes
    -----
    The start vector is the normalized all-ones vector so results are
    reproducible. If it lies in the null space of ``G`` the iteration restarts
    once from a fixed-seed random vector.
    """
    G = np.asarray(G, dtype=np.float64)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {G.shape}")
    n = G.shape[0]
    if n == 0 or not np.any(G):
        return 0.0
    x = np.full(n, 1.0 / np.sqrt(n))
    restarted = False
    lam_prev = None
    lam = 0.0
    it = 0
    while it < max_iter:
        y = G @ x
        lam = float(x @ y)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            if restarted:
                return 0.0
            restarted = True
            x = np.random.default_rng(0).standard_normal(n)
            x /= np.linalg.norm(x)
            lam_prev = None
            continue
        x = y / ny
        it += 1
        if lam_prev is not None and abs(lam - lam_prev) <= tol * abs(lam):
            break
        lam_prev = lam
    return max(float(x @ (G @ x)), lam)


_PIVOT_RE = re.compile(r"(\d+)-th leading minor")


def solve_spd(A, B) -> np.ndarray:
    """Solve ``X A = B`` for ``X`` with ``A`` symmetric positive definite.

    ``A`` is ``k x k`` and ``B`` is ``m x k`` (a 1-D ``B`` is treated as one row).
    Uses a Cholesky factorization of ``A``.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    one_row = B.ndim == 1
    B2 = B[None, :] if one_row else B
    if B2.ndim != 2 or B2.shape[1] != A.shape[0]:
        raise ValueError(f"B shape {B.shape} incompatible with A shape {A.shape}")
    try:
        factor = scipy.linalg.cho_factor(A, lower=True)
    except np.linalg.LinAlgError as exc:
        m = _PIVOT_RE.search(str(exc))
        pivot = m.group(1) if m else "?"
        raise NumericalError(
            f"matrix is not positive definite: Cholesky failed at pivot {pivot}"
        ) from exc
    X = scipy.linalg.cho_solve(factor, B2.T).T
    return X[0] if one_row else X


def soft_threshold(T, s: float) -> np.ndarray:
    """Elementwise ``sign(t) * max(0, |t| - s)``, the prox of ``s * ||.||_1``."""
    if s < 0:
        raise ValueError(f"threshold must be non-negative, got {s}")
    T = np.asarray(T, dtype=np.float64)
    # + 0.0 turns the -0.0 produced for small negative inputs into +0.0
    return np.sign(T) * np.maximum(np.abs(T) - s, 0.0) + 0.0
