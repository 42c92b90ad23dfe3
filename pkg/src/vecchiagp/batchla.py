"""Batched dense linear algebra on strided contiguous buffers.

A batch of ``count`` matrices of order ``dim`` lives in one flat float64
buffer at offsets ``k * stride``, column-major within each matrix: entry
(i, j) of matrix k sits at ``k * stride + j * dim + i``.  Vector batches
are laid out the same way with ``stride >= dim``.

The factorization and solve kernels sweep the small dimension while
operating elementwise across all batch entries at once, chunked to bound
temporaries.  Per-entry arithmetic never mixes entries, and the dot
product accumulates in ascending index order, so results are bit-identical
across runs, chunk boundaries, and worker counts.  Batches whose order
exceeds ``LAPACK_DIM_THRESHOLD`` (the full-conditioning regime: a couple
of huge entries rather than many small ones) are routed to LAPACK
entry by entry instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided

from . import parallel
from .errors import NonPositiveDefiniteError, SingularTriangularError

# Per-chunk temporary budget in float64 elements.
_CHUNK_ELEMS = 1 << 21

# Above this order, per-entry LAPACK beats the vectorized batch sweep.
LAPACK_DIM_THRESHOLD = 256


def _matrix_chunk(dim: int) -> int:
    return max(1, _CHUNK_ELEMS // (dim * dim))


def _vector_chunk(dim: int) -> int:
    return max(1, _CHUNK_ELEMS // dim)


@dataclass
class StridedMatrixBatch:
    """``count`` matrices of order ``dim`` in one contiguous buffer."""

    buffer: np.ndarray
    count: int
    dim: int
    stride: int

    def __post_init__(self):
        if self.stride < self.dim * self.dim:
            raise ValueError(f"stride {self.stride} < dim^2 = {self.dim * self.dim}")
        self.buffer = np.ascontiguousarray(self.buffer, dtype=np.float64)
        if self.buffer.shape != (self.count * self.stride,):
            raise ValueError(
                f"buffer length {self.buffer.shape} != count*stride = {self.count * self.stride}"
            )

    @classmethod
    def zeros(cls, count: int, dim: int, stride: int | None = None) -> "StridedMatrixBatch":
        stride = dim * dim if stride is None else stride
        return cls(np.zeros(count * stride), count, dim, stride)

    @classmethod
    def from_matrices(cls, matrices, stride: int | None = None) -> "StridedMatrixBatch":
        matrices = np.asarray(matrices, dtype=np.float64)
        count, dim = matrices.shape[0], matrices.shape[1]
        batch = cls.zeros(count, dim, stride)
        batch.mats[:] = matrices
        return batch

    @property
    def mats(self) -> np.ndarray:
        """(count, dim, dim) view; element (k, i, j) maps to k*stride + j*dim + i."""
        item = self.buffer.itemsize
        return as_strided(
            self.buffer,
            shape=(self.count, self.dim, self.dim),
            strides=(self.stride * item, item, self.dim * item),
        )

    def matrix(self, k: int) -> np.ndarray:
        return self.mats[k]


@dataclass
class StridedVectorBatch:
    """``count`` vectors of length ``dim`` in one contiguous buffer."""

    buffer: np.ndarray
    count: int
    dim: int
    stride: int

    def __post_init__(self):
        if self.stride < self.dim:
            raise ValueError(f"stride {self.stride} < dim = {self.dim}")
        self.buffer = np.ascontiguousarray(self.buffer, dtype=np.float64)
        if self.buffer.shape != (self.count * self.stride,):
            raise ValueError(
                f"buffer length {self.buffer.shape} != count*stride = {self.count * self.stride}"
            )

    @classmethod
    def zeros(cls, count: int, dim: int, stride: int | None = None) -> "StridedVectorBatch":
        stride = dim if stride is None else stride
        return cls(np.zeros(count * stride), count, dim, stride)

    @classmethod
    def from_vectors(cls, vectors, stride: int | None = None) -> "StridedVectorBatch":
        vectors = np.asarray(vectors, dtype=np.float64)
        batch = cls.zeros(vectors.shape[0], vectors.shape[1], stride)
        batch.vecs[:] = vectors
        return batch

    @property
    def vecs(self) -> np.ndarray:
        item = self.buffer.itemsize
        return as_strided(
            self.buffer,
            shape=(self.count, self.dim),
            strides=(self.stride * item, item),
        )

    def vector(self, k: int) -> np.ndarray:
        return self.vecs[k]


@dataclass
class BatchScalars:
    """One scalar per batch entry."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)


def _potrf_sweep(mats: np.ndarray, base: int) -> None:
    # Right-looking Cholesky vectorized over the batch axis: scale the
    # pivot column, then rank-1-update the trailing block.  Elementwise
    # ops only, so entries never interact.
    dim = mats.shape[1]
    for j in range(dim):
        piv = mats[:, j, j]
        bad = ~(piv > 0.0)
        if np.any(bad):
            k = int(np.argmax(bad))
            raise NonPositiveDefiniteError(base + k, f"pivot {j} is {piv[k]!r}")
        np.sqrt(piv, out=piv)
        if j + 1 < dim:
            col = mats[:, j + 1 :, j]
            col /= piv[:, None]
            mats[:, j + 1 :, j + 1 :] -= col[:, :, None] * col[:, None, :]


def _potrf_lapack(mats: np.ndarray, base: int) -> None:
    for k in range(mats.shape[0]):
        try:
            mats[k] = np.linalg.cholesky(mats[k])
        except np.linalg.LinAlgError as exc:
            raise NonPositiveDefiniteError(base + k, str(exc)) from None


def batch_potrf(a: StridedMatrixBatch) -> StridedMatrixBatch:
    """In-place lower Cholesky factor of every batch entry.

    Only the lower triangle of each input is read; on return the lower
    triangle holds L with L L^T = A and the upper triangle is unspecified.
    Raises NonPositiveDefiniteError naming the first offending entry.
    """
    kernel = _potrf_lapack if a.dim > LAPACK_DIM_THRESHOLD else _potrf_sweep
    mats = a.mats

    def chunk(lo, hi):
        kernel(mats[lo:hi], lo)

    parallel.map_chunks(chunk, 0, a.count, _matrix_chunk(a.dim))
    return a


def batch_trsv(l: StridedMatrixBatch, b: StridedVectorBatch) -> StridedVectorBatch:
    """Solve L x = b per batch entry by forward substitution; b is untouched."""
    if l.count != b.count or l.dim != b.dim:
        raise ValueError(
            f"shape mismatch: matrices ({l.count}, {l.dim}), vectors ({b.count}, {b.dim})"
        )
    x = StridedVectorBatch.zeros(b.count, b.dim, b.stride)
    mats = l.mats
    xv = x.vecs
    bv = b.vecs
    dim = l.dim

    def chunk(lo, hi):
        m = mats[lo:hi]
        xs = xv[lo:hi]
        xs[:] = bv[lo:hi]
        for j in range(dim):
            piv = m[:, j, j]
            bad = piv == 0.0
            if np.any(bad):
                raise SingularTriangularError(lo + int(np.argmax(bad)))
            xs[:, j] /= piv
            if j + 1 < dim:
                xs[:, j + 1 :] -= m[:, j + 1 :, j] * xs[:, j, None]

    parallel.map_chunks(chunk, 0, l.count, _vector_chunk(dim))
    return x


def batch_dot(a: StridedVectorBatch, b: StridedVectorBatch) -> BatchScalars:
    """Per-entry inner products, accumulated in ascending index order."""
    if a.count != b.count or a.dim != b.dim:
        raise ValueError(
            f"shape mismatch: ({a.count}, {a.dim}) vs ({b.count}, {b.dim})"
        )
    out = np.zeros(a.count)
    av = a.vecs
    bv = b.vecs

    def chunk(lo, hi):
        acc = out[lo:hi]
        for i in range(a.dim):
            acc += av[lo:hi, i] * bv[lo:hi, i]

    parallel.map_chunks(chunk, 0, a.count, _vector_chunk(a.dim))
    return BatchScalars(out)


def half_log_det(l: np.ndarray) -> float:
    """Sum of log diagonal entries of a lower factor: 0.5 * log det(L L^T)."""
    diag = np.diagonal(np.asarray(l, dtype=np.float64))
    if np.any(diag <= 0.0):
        raise ValueError("half_log_det requires a strictly positive diagonal")
    return float(np.log(diag).sum())
