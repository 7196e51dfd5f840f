"""Matrix-free multi-level block Hankel operator and its Gram matrix.

The Hankel matrix H of a data tensor B under a ConvSpec is never stored at
production scale; it is defined by the identity

    H @ vec(A) == vec(nd_convolve(B, A, spec))

for every kernel-shaped A.  Row p of H is the per-dimension index-reversed
data patch at output position p, so column j of H is the data window whose
start offset is (n-1) - j' per dimension.  All products and the Gram matrix
H^H H are computed from windows of the data, with working memory bounded by
a block budget on the order of the data itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    ConvSpec,
    Shape5,
    ShapeMismatchError,
    check_kspace,
    kernel_window_offsets,
    nd_convolve,
    unvec,
    vec,
)

COMPLEX_BYTES = 16  # complex128

EXPLICIT_ENTRY_CAP = 10**7


class HankelSizeCapError(ValueError):
    """Explicit Hankel construction refused: entry count above the cap."""


def hankel_matrix_shape(data_shape, spec: ConvSpec) -> tuple:
    """(rows, cols) of the implied Hankel matrix."""
    rows = spec.validate_for(data_shape).count
    return rows, spec.kernel_size


def hankel_nbytes(data_shape, spec: ConvSpec, itemsize: int = COMPLEX_BYTES) -> int:
    """Bytes an explicit dense Hankel matrix would occupy."""
    rows, cols = hankel_matrix_shape(data_shape, spec)
    return rows * cols * itemsize


def _column_indices(data_shape: Shape5, spec: ConvSpec, offsets_row) -> tuple:
    out = spec.output_shape(data_shape)
    ixs = []
    for d in range(5):
        idx = np.arange(out[d]) + offsets_row[d]
        if spec.kinds[d] == "circular":
            idx %= data_shape[d]
        ixs.append(idx)
    return np.ix_(*ixs)


def hankel_column_block(data: np.ndarray, spec: ConvSpec, start: int, stop: int,
                        offsets: np.ndarray | None = None) -> np.ndarray:
    """Columns [start, stop) of the Hankel matrix as a dense (rows, b) block."""
    data = check_kspace(data, "data")
    ds = Shape5.of(data.shape)
    rows = spec.validate_for(ds).count
    if offsets is None:
        offsets = kernel_window_offsets(spec)
    block = np.empty((rows, stop - start), dtype=np.complex128)
    for j in range(start, stop):
        block[:, j - start] = vec(data[_column_indices(ds, spec, offsets[j])])
    return block


def default_block_columns(data: np.ndarray, spec: ConvSpec, budget_bytes: int | None = None) -> int:
    """Widest column block whose bytes stay within the budget (default: data size)."""
    rows, _ = hankel_matrix_shape(data.shape, spec)
    if budget_bytes is None:
        budget_bytes = data.size * COMPLEX_BYTES
    return max(1, min(spec.kernel_size, budget_bytes // (rows * COMPLEX_BYTES)))


@dataclass(frozen=True)
class HankelOperator:
    """Implicit Hankel matrix of a fixed data tensor under a ConvSpec."""

    data: np.ndarray
    spec: ConvSpec

    def __post_init__(self):
        check_kspace(self.data, "data")
        self.spec.validate_for(self.data.shape)

    @property
    def shape(self) -> tuple:
        return hankel_matrix_shape(self.data.shape, self.spec)

    def matvec(self, a: np.ndarray) -> np.ndarray:
        return hankel_matvec(self, a)

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        return hankel_rmatvec(self, y)


def hankel_matvec(op: HankelOperator, a: np.ndarray) -> np.ndarray:
    """H @ a, realized as the convolution it stands for."""
    a = np.asarray(a)
    if a.ndim != 1 or a.size != op.spec.kernel_size:
        raise ShapeMismatchError(
            f"expected vector of length {op.spec.kernel_size}, got shape {a.shape}"
        )
    kernel = unvec(a, tuple(op.spec.kernel_shape))
    return vec(nd_convolve(op.data, kernel, op.spec))


def hankel_rmatvec(op: HankelOperator, y: np.ndarray) -> np.ndarray:
    """H^H @ y via blocked window inner products (no explicit matrix)."""
    rows, cols = op.shape
    y = np.asarray(y, dtype=np.complex128)
    if y.ndim != 1 or y.size != rows:
        raise ShapeMismatchError(f"expected vector of length {rows}, got shape {y.shape}")
    offsets = kernel_window_offsets(op.spec)
    bc = default_block_columns(op.data, op.spec)
    out = np.empty(cols, dtype=np.complex128)
    for start in range(0, cols, bc):
        stop = min(start + bc, cols)
        block = hankel_column_block(op.data, op.spec, start, stop, offsets)
        out[start:stop] = block.conj().T @ y
    return out


def gram_matrix(data: np.ndarray, spec: ConvSpec, budget_bytes: int | None = None) -> np.ndarray:
    """Dense Hermitian H^H H assembled from column blocks of windows.

    Work is O(kernel_size^2 * rows); working memory stays within a few column
    blocks (each at most the data size) plus the Gram matrix itself.  The
    result is symmetrized as (G + G^H) / 2 before return.
    """
    data = check_kspace(data, "data")
    cols = spec.kernel_size
    offsets = kernel_window_offsets(spec)
    bc = default_block_columns(data, spec, budget_bytes)
    gram = np.empty((cols, cols), dtype=np.complex128)
    starts = list(range(0, cols, bc))
    for sj in starts:
        ej = min(sj + bc, cols)
        cj = hankel_column_block(data, spec, sj, ej, offsets)
        cjh = cj.conj().T
        for sk in starts:
            if sk < sj:
                continue
            ek = min(sk + bc, cols)
            ck = cj if sk == sj else hankel_column_block(data, spec, sk, ek, offsets)
            tile = cjh @ ck
            gram[sj:ej, sk:ek] = tile
            if sk != sj:
                gram[sk:ek, sj:ej] = tile.conj().T
    gram += gram.conj().T
    gram *= 0.5
    return gram


def explicit_hankel(op: HankelOperator, entry_cap: int = EXPLICIT_ENTRY_CAP) -> np.ndarray:
    """Dense Hankel matrix, for tests and small baselines only.

    Built row-by-row as index-reversed data patches (a deliberately separate
    code path from the column-window machinery used by gram_matrix).  Refuses
    problems with more than ``entry_cap`` entries.
    """
    rows, cols = op.shape
    if rows * cols > entry_cap:
        raise HankelSizeCapError(
            f"explicit Hankel would hold {rows * cols} entries (cap {entry_cap}); "
            "this oracle is for small problems only"
        )
    ds = Shape5.of(op.data.shape)
    ks = op.spec.kernel_shape
    out = op.spec.output_shape(ds)
    data = np.asarray(op.data, dtype=np.complex128)
    h = np.empty((rows, cols), dtype=np.complex128)
    flip = (slice(None, None, -1),) * 5
    for p in range(rows):
        pos = np.unravel_index(p, tuple(out), order="F")
        ixs = []
        for d in range(5):
            idx = pos[d] + np.arange(ks[d])
            if op.spec.kinds[d] == "circular":
                idx %= ds[d]
            ixs.append(idx)
        patch = data[np.ix_(*ixs)]
        h[p, :] = vec(patch[flip])
    return h
