"""Gram eigendecomposition, rank split, and annihilating filter extraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConvSpec, ShapeMismatchError


class RankRangeError(ValueError):
    """Rank must satisfy 0 < r < kernel_size so the null space is non-empty."""


@dataclass(frozen=True)
class EigenPair:
    """Full Hermitian eigendecomposition, eigenvalues ascending.

    The values are squared singular values of the underlying Hankel matrix.
    """

    values: np.ndarray
    vectors: np.ndarray

    @property
    def side(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class FilterBank:
    """Annihilating kernels, stored stacked along a trailing filter axis.

    ``matrix`` recovers the (kernel_size, count) eigenvector block; column i
    and ``kernel(i)`` are the same coefficients under the canonical
    linearization, so vec(D conv kernel(i)) == H @ matrix[:, i] exactly.
    """

    stack: np.ndarray
    spec: ConvSpec

    def __post_init__(self):
        expect = tuple(self.spec.kernel_shape)
        if self.stack.ndim != 6 or self.stack.shape[:5] != expect:
            raise ShapeMismatchError(
                f"filter stack shape {self.stack.shape} does not match kernel {expect}"
            )

    @property
    def count(self) -> int:
        return self.stack.shape[5]

    @property
    def matrix(self) -> np.ndarray:
        return self.stack.reshape(self.spec.kernel_size, self.count, order="F")

    def kernel(self, i: int) -> np.ndarray:
        return self.stack[..., i]

    def __iter__(self):
        return (self.stack[..., i] for i in range(self.count))


def hermitian_eig(gram: np.ndarray, overwrite: bool = False) -> EigenPair:
    """Full spectrum of a Hermitian (symmetrized) Gram matrix, ascending.

    With ``overwrite=True`` the input buffer may be recycled for the
    eigenvectors (the caller must not use it afterward); this keeps peak
    memory at one matrix of Gram size instead of two.
    """
    gram = np.asarray(gram)
    if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:
        raise ShapeMismatchError(f"expected a square matrix, got shape {gram.shape}")
    if not np.all(np.isfinite(gram)):
        raise ValueError("Gram matrix contains non-finite entries")
    from scipy.linalg import eigh

    values, vectors = eigh(gram, overwrite_a=overwrite, check_finite=False)
    return EigenPair(values=values, vectors=vectors)


def split_by_rank(eig: EigenPair, rank: int) -> tuple:
    """(V_parallel, V_perp): signal block of the r largest values, rest null.

    Ties at the boundary are broken purely by sorted position; only the
    spanned subspaces are meaningful in that case.
    """
    side = eig.side
    if not 0 < rank < side:
        raise RankRangeError(
            f"rank must lie strictly between 0 and {side} (kernel size); got {rank}"
        )
    v_par = eig.vectors[:, side - rank:]
    v_perp = eig.vectors[:, : side - rank]
    return v_par, v_perp


def filters_from_nullspace(v_perp: np.ndarray, spec: ConvSpec) -> FilterBank:
    """Reshape null-space eigenvectors into annihilating kernels.

    Because the Gram matrix is H^H H with columns already in canonical kernel
    order, each eigenvector IS a kernel under unvec: no index reversal is
    applied (reversing would break vec(D conv F_i) == H @ v_i and with it the
    annihilation property the solver relies on).
    """
    v_perp = np.asarray(v_perp, dtype=np.complex128)
    if v_perp.ndim == 1:
        v_perp = v_perp[:, None]
    if v_perp.shape[0] != spec.kernel_size:
        raise ShapeMismatchError(
            f"eigenvector length {v_perp.shape[0]} does not match kernel size {spec.kernel_size}"
        )
    stack = v_perp.reshape(tuple(spec.kernel_shape) + (v_perp.shape[1],), order="F")
    return FilterBank(stack=stack, spec=spec)
