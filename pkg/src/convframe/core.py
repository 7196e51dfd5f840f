"""Complex 5-D k-space tensors and the per-dimension convolution primitives.

Conventions used everywhere in this package:

* k-space tensors are numpy arrays with exactly five axes, ordered
  (kx, ky, kz, coil, t), complex128 unless stated otherwise.
* Linearization ("vec") is column-major over that axis order, kx fastest.
  Every reshape between vectors and tensors goes through :func:`vec` /
  :func:`unvec` so the convention lives in one place.
* ``valid`` convolution of data B (extent m) with kernel A (extent n) has
  output extent m - n + 1 and no boundary handling; ``circular`` keeps
  extent m with modular index arithmetic.  Both evaluate

      out[p] = sum_k A[k] * B[p + (n-1) - k]

  per dimension, with the index taken mod m on circular dimensions and p
  restricted to fully interior positions on valid dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

VALID = "valid"
CIRCULAR = "circular"
_KINDS = (VALID, CIRCULAR)

AXIS_NAMES = ("kx", "ky", "kz", "coil", "t")


class ShapeMismatchError(ValueError):
    """Incompatible tensor/kernel extents or malformed dimensionality."""


class Shape5(NamedTuple):
    """Extents of the five k-space axes (kx, ky, kz, coil, t)."""

    nx: int
    ny: int
    nz: int
    nc: int
    nt: int

    @classmethod
    def of(cls, seq) -> "Shape5":
        t = tuple(int(v) for v in seq)
        if len(t) != 5:
            raise ShapeMismatchError(f"expected 5 extents, got {len(t)}: {t!r}")
        if any(v < 1 for v in t):
            raise ShapeMismatchError(f"extents must be >= 1, got {t!r}")
        return cls(*t)

    @property
    def count(self) -> int:
        return int(np.prod(self, dtype=np.int64))


def check_kspace(arr: np.ndarray, name: str = "tensor") -> np.ndarray:
    """Require a 5-axis array; returns it unchanged."""
    arr = np.asarray(arr)
    if arr.ndim != 5:
        raise ShapeMismatchError(f"{name} must have 5 axes (kx, ky, kz, coil, t); got {arr.ndim}")
    return arr


def vec(x: np.ndarray) -> np.ndarray:
    """Canonical linearization: column-major, kx fastest."""
    return np.asarray(x).reshape(-1, order="F")


def unvec(v: np.ndarray, shape) -> np.ndarray:
    """Inverse of :func:`vec` for the given 5-D shape."""
    shape = tuple(shape)
    v = np.asarray(v)
    if v.size != int(np.prod(shape, dtype=np.int64)):
        raise ShapeMismatchError(f"vector of length {v.size} does not fill shape {shape}")
    return v.reshape(shape, order="F")


@dataclass(frozen=True)
class ConvSpec:
    """Kernel extents plus a valid/circular flag per dimension.

    The coil dimension kernel extent must span all coils of the data it is
    applied to, so its valid-convolution output extent is 1.
    """

    kernel_shape: Shape5
    kinds: tuple = (VALID, VALID, VALID, VALID, VALID)

    def __post_init__(self):
        object.__setattr__(self, "kernel_shape", Shape5.of(self.kernel_shape))
        kinds = tuple(self.kinds)
        if len(kinds) != 5 or any(k not in _KINDS for k in kinds):
            raise ShapeMismatchError(f"kinds must be 5 entries of valid|circular, got {kinds!r}")
        object.__setattr__(self, "kinds", kinds)

    @classmethod
    def for_data(cls, kernel_shape, nt: int = 1, circular_time: bool = True) -> "ConvSpec":
        """Default layout: everything valid, time circular when nt > 1."""
        kinds = [VALID] * 5
        if circular_time and nt > 1:
            kinds[4] = CIRCULAR
        return cls(Shape5.of(kernel_shape), tuple(kinds))

    @property
    def kernel_size(self) -> int:
        return self.kernel_shape.count

    def validate_for(self, data_shape) -> Shape5:
        """Check data/kernel compatibility; returns the output shape."""
        ds = Shape5.of(data_shape)
        ks = self.kernel_shape
        for d in range(5):
            if ks[d] > ds[d]:
                raise ShapeMismatchError(
                    f"kernel extent {ks[d]} exceeds data extent {ds[d]} on axis {AXIS_NAMES[d]}"
                )
        if ks.nc != ds.nc:
            raise ShapeMismatchError(
                f"kernel coil extent {ks.nc} must equal data coil count {ds.nc}"
            )
        return self.output_shape(ds)

    def output_shape(self, data_shape) -> Shape5:
        ds = Shape5.of(data_shape)
        out = []
        for d in range(5):
            if self.kinds[d] == VALID:
                out.append(ds[d] - self.kernel_shape[d] + 1)
            else:
                out.append(ds[d])
        return Shape5.of(out)

    def num_windows(self, data_shape) -> int:
        """Rows of the implied Hankel matrix (= output positions)."""
        return self.output_shape(data_shape).count


def kernel_window_offsets(spec: ConvSpec) -> np.ndarray:
    """Start offsets of the data window tied to each kernel coefficient.

    Returns an (kernel_size, 5) int array whose row j holds (n-1) - j' per
    dimension, j' being the multi-index of column j under the canonical
    linearization.  Column j of the implied Hankel matrix is the data window
    starting at that offset.
    """
    ks = spec.kernel_shape
    idx = np.unravel_index(np.arange(ks.count), tuple(ks), order="F")
    return np.stack([ks[d] - 1 - idx[d] for d in range(5)], axis=1)


def _wrap_pad(data: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Extend circular dims by (kernel extent - 1) so all dims act valid."""
    out = data
    for d in range(5):
        n = spec.kernel_shape[d]
        if spec.kinds[d] == CIRCULAR and n > 1:
            head = [slice(None)] * 5
            head[d] = slice(0, n - 1)
            out = np.concatenate([out, out[tuple(head)]], axis=d)
    return out


def _wrap_fold(padded: np.ndarray, spec: ConvSpec, data_shape: Shape5) -> np.ndarray:
    """Adjoint of :func:`_wrap_pad`: fold the extension back onto the head."""
    out = padded
    for d in range(5):
        n = spec.kernel_shape[d]
        if spec.kinds[d] == CIRCULAR and n > 1:
            m = data_shape[d]
            head = [slice(None)] * 5
            tail = [slice(None)] * 5
            head[d] = slice(0, n - 1)
            tail[d] = slice(m, m + n - 1)
            keep = [slice(None)] * 5
            keep[d] = slice(0, m)
            out = out[tuple(keep)].copy()
            out[tuple(head)] += padded[tuple(tail)]
            padded = out
    return out


def nd_convolve(data: np.ndarray, kernel: np.ndarray, spec: ConvSpec, method: str = "direct") -> np.ndarray:
    """Mixed valid/circular convolution of a 5-D tensor with a small kernel.

    ``method="direct"`` accumulates sliding sums kernel-entry by kernel-entry
    in canonical order (bit-reproducible); ``method="fft"`` uses an FFT
    product and matches the direct path to ~1e-13 relative.
    """
    data = check_kspace(data, "data")
    kernel = check_kspace(kernel, "kernel")
    if tuple(kernel.shape) != tuple(spec.kernel_shape):
        raise ShapeMismatchError(
            f"kernel shape {kernel.shape} disagrees with spec {tuple(spec.kernel_shape)}"
        )
    out_shape = spec.validate_for(data.shape)
    padded = _wrap_pad(np.asarray(data, dtype=np.complex128), spec)
    kernel = np.asarray(kernel, dtype=np.complex128)

    if method == "fft":
        from scipy.signal import fftconvolve

        return fftconvolve(padded, kernel, mode="valid")
    if method != "direct":
        raise ValueError(f"unknown method {method!r}")

    ks = spec.kernel_shape
    out = np.zeros(tuple(out_shape), dtype=np.complex128)
    for flat in range(ks.count):
        k = np.unravel_index(flat, tuple(ks), order="F")
        sl = tuple(slice(ks[d] - 1 - k[d], ks[d] - 1 - k[d] + out_shape[d]) for d in range(5))
        out += kernel[k] * padded[sl]
    return out


def nd_convolve_adjoint(y: np.ndarray, kernel: np.ndarray, spec: ConvSpec, out_shape) -> np.ndarray:
    """Adjoint of ``nd_convolve(. , kernel, spec)`` onto tensors of ``out_shape``.

    Satisfies <nd_convolve(B, A, spec), Y> == <B, nd_convolve_adjoint(Y, A, spec)>
    for the conjugate-linear inner product <u, v> = sum(conj(u) * v).
    """
    y = check_kspace(y, "y")
    kernel = check_kspace(kernel, "kernel")
    if tuple(kernel.shape) != tuple(spec.kernel_shape):
        raise ShapeMismatchError(
            f"kernel shape {kernel.shape} disagrees with spec {tuple(spec.kernel_shape)}"
        )
    out5 = Shape5.of(out_shape)
    expect = spec.validate_for(out5)
    if tuple(y.shape) != tuple(expect):
        raise ShapeMismatchError(f"y has shape {y.shape}, expected {tuple(expect)}")

    ks = spec.kernel_shape
    pad_shape = tuple(
        out5[d] + (ks[d] - 1 if spec.kinds[d] == CIRCULAR else 0) for d in range(5)
    )
    acc = np.zeros(pad_shape, dtype=np.complex128)
    kernel = np.asarray(kernel, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    for flat in range(ks.count):
        k = np.unravel_index(flat, tuple(ks), order="F")
        sl = tuple(slice(ks[d] - 1 - k[d], ks[d] - 1 - k[d] + expect[d]) for d in range(5))
        acc[sl] += np.conj(kernel[k]) * y
    return _wrap_fold(acc, spec, out5)


def linear_convolve_full(data: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Full linear convolution (output extent m + n - 1 per dim).

    Test helper only: realized as zero padding followed by all-valid
    convolution; the solver never uses it.
    """
    data = check_kspace(data, "data")
    kernel = check_kspace(kernel, "kernel")
    n = Shape5.of(kernel.shape)
    padded = np.pad(data, [(n[d] - 1, n[d] - 1) for d in range(5)])
    spec = ConvSpec(n, (VALID,) * 5)
    return nd_convolve(padded, kernel, spec)


_SPATIAL_AXES = (0, 1, 2)


def centered_ifft_spatial(data: np.ndarray) -> np.ndarray:
    """Unitary centered inverse DFT along kx, ky, kz for each (coil, t)."""
    data = check_kspace(data, "data")
    x = np.fft.ifftshift(data, axes=_SPATIAL_AXES)
    x = np.fft.ifftn(x, axes=_SPATIAL_AXES, norm="ortho")
    return np.fft.fftshift(x, axes=_SPATIAL_AXES)


def centered_fft_spatial(data: np.ndarray) -> np.ndarray:
    """Inverse of :func:`centered_ifft_spatial`."""
    data = check_kspace(data, "data")
    x = np.fft.ifftshift(data, axes=_SPATIAL_AXES)
    x = np.fft.fftn(x, axes=_SPATIAL_AXES, norm="ortho")
    return np.fft.fftshift(x, axes=_SPATIAL_AXES)
