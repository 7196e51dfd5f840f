"""Shared brute-force oracles, deliberately independent of the package paths.

Everything here evaluates definitions directly with plain loops: the
convolution sum, the dense Hankel matrix entry formula, and an O(N^2) DFT.
Slow by design; only used on small instances.
"""

import numpy as np
import pytest

from convframe import ConvSpec, Shape5


def brute_convolve(data, kernel, spec: ConvSpec):
    """Evaluate out[p] = sum_k A[k] * B[p + (n-1) - k] by explicit loops."""
    data = np.asarray(data, dtype=np.complex128)
    kernel = np.asarray(kernel, dtype=np.complex128)
    out_shape = tuple(spec.output_shape(data.shape))
    ks = tuple(spec.kernel_shape)
    ms = data.shape
    out = np.zeros(out_shape, dtype=np.complex128)
    for p in np.ndindex(out_shape):
        acc = 0.0 + 0.0j
        for k in np.ndindex(ks):
            idx = []
            for d in range(5):
                i = p[d] + (ks[d] - 1) - k[d]
                if spec.kinds[d] == "circular":
                    i %= ms[d]
                idx.append(i)
            acc += kernel[k] * data[tuple(idx)]
        out[p] = acc
    return out


def brute_hankel(data, spec: ConvSpec):
    """Dense matrix with H[p, j] = B[p + (n-1) - j'] from the definition."""
    data = np.asarray(data, dtype=np.complex128)
    out_shape = tuple(spec.output_shape(data.shape))
    ks = tuple(spec.kernel_shape)
    ms = data.shape
    rows = int(np.prod(out_shape))
    cols = int(np.prod(ks))
    h = np.zeros((rows, cols), dtype=np.complex128)
    for pf in range(rows):
        p = np.unravel_index(pf, out_shape, order="F")
        for jf in range(cols):
            j = np.unravel_index(jf, ks, order="F")
            idx = []
            for d in range(5):
                i = p[d] + (ks[d] - 1) - j[d]
                if spec.kinds[d] == "circular":
                    i %= ms[d]
                idx.append(i)
            h[pf, jf] = data[tuple(idx)]
    return h


def brute_dft1(x, inverse=False):
    """O(n^2) unitary DFT of a 1-D array."""
    n = x.size
    sign = 1j if inverse else -1j
    w = np.exp(sign * 2 * np.pi * np.outer(np.arange(n), np.arange(n)) / n)
    return (w @ x) / np.sqrt(n)


def brute_centered_ifft_spatial(data):
    """Centered unitary inverse DFT along the three spatial axes, per 1-D axis."""
    out = np.asarray(data, dtype=np.complex128).copy()
    for axis in (0, 1, 2):
        n = out.shape[axis]
        if n == 1:
            continue
        out = np.moveaxis(out, axis, 0)
        flat = out.reshape(n, -1)
        shifted = np.roll(flat, -(n // 2), axis=0)        # ifftshift
        transformed = np.stack([brute_dft1(shifted[:, c], inverse=True) for c in range(flat.shape[1])], axis=1)
        flat = np.roll(transformed, n // 2, axis=0)       # fftshift
        out = np.moveaxis(flat.reshape(out.shape), 0, axis)
    return out


def random_spec(rng, max_extent=7, max_kernel=4, force_kinds=None):
    """Random small (data, kernel shape, spec) triple with mixed conv kinds."""
    ds = Shape5.of(
        tuple(int(rng.integers(1, max_extent)) for _ in range(3))
        + (int(rng.integers(1, 4)),)
        + (int(rng.integers(1, 5)),)
    )
    ks = Shape5.of(
        tuple(int(rng.integers(1, min(d, max_kernel) + 1)) for d in ds[:3])
        + (ds.nc,)
        + (int(rng.integers(1, ds.nt + 1)),)
    )
    if force_kinds is None:
        kinds = tuple(str(rng.choice(["valid", "circular"])) for _ in range(5))
    else:
        kinds = force_kinds
    data = rng.standard_normal(tuple(ds)) + 1j * rng.standard_normal(tuple(ds))
    return data, ConvSpec(ks, kinds)


def random_kernel(rng, spec: ConvSpec):
    shape = tuple(spec.kernel_shape)
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
