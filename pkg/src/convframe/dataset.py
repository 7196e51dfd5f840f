"""Synthetic multi-coil phantoms, undersampling masks, and tensor file I/O.

Phantoms are built so that annihilating structure holds exactly: each coil
sensitivity is the centered inverse DFT of a random k-space kernel with
finite support, hence the k-space of (image x sensitivity) is the image
spectrum convolved with that small kernel and cross-coil annihilation
identities hold to floating-point precision.

All randomness flows through ``numpy.random.default_rng`` (PCG64); equal
seeds give bit-identical outputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .core import ConvSpec, Shape5, ShapeMismatchError, centered_fft_spatial, centered_ifft_spatial, check_kspace
from .hankel import gram_matrix


class MaskSpecError(ValueError):
    """Unsatisfiable sampling request (bad acceleration, oversized box, ...)."""


class TensorFileError(ValueError):
    """Malformed or inconsistent .cfk header/payload."""


@dataclass(frozen=True)
class PhantomSpec:
    """Synthetic phantom layout.

    coil_support is the per-spatial-dim k-space extent (cx, cy, cz) of each
    coil's sensitivity kernel; keep it strictly below the reconstruction
    kernel extents for annihilating filters to exist (not enforced here).

    For nt > 1 each ellipse's amplitude is modulated by a single cosine
    harmonic of the frame index, so frames repeat with period nt and the
    time direction carries exactly three harmonics (a clean temporal rank
    for circular-in-time kernels); motion_amplitude sets the modulation
    depth.
    """

    shape: Shape5
    coil_support: tuple = (2, 2, 1)
    num_ellipses: int = 5
    seed: int = 0
    smooth_sigma: float = 1.0
    motion_amplitude: float = 0.25

    def __post_init__(self):
        object.__setattr__(self, "shape", Shape5.of(self.shape))
        cs = tuple(int(v) for v in self.coil_support)
        if len(cs) != 3 or any(v < 1 for v in cs):
            raise ShapeMismatchError(f"coil_support needs 3 positive extents, got {cs!r}")
        for c, n in zip(cs, (self.shape.nx, self.shape.ny, self.shape.nz)):
            if c > n:
                raise ShapeMismatchError(f"coil support {cs} exceeds grid {tuple(self.shape[:3])}")
        object.__setattr__(self, "coil_support", cs)
        if self.num_ellipses < 1:
            raise ValueError("need at least one ellipse")


@dataclass(frozen=True)
class PhantomData:
    """Full phantom bundle: k-space, ground-truth pieces, measured rank."""

    d_full: np.ndarray
    images: np.ndarray       # (nx, ny, nz, nt) real
    sens: np.ndarray         # (nx, ny, nz, nc) complex
    coil_kernels: np.ndarray  # (cx, cy, cz, nc) complex
    true_rank: int | None


def _render_images(spec: PhantomSpec, rng: np.random.Generator) -> np.ndarray:
    nx, ny, nz, _, nt = spec.shape
    ne = spec.num_ellipses
    centers = rng.uniform(0.25, 0.75, size=(ne, 3))
    semi = rng.uniform(0.08, 0.30, size=(ne, 3))
    angles = rng.uniform(0.0, np.pi, size=ne)
    amps = rng.uniform(0.4, 1.0, size=ne)
    depth = rng.uniform(0.3, 1.0, size=ne) * spec.motion_amplitude
    phases = rng.uniform(0.0, 2 * np.pi, size=ne)
    if nz == 1:
        semi = semi.copy()
        semi[:, 2] = 1.0  # degenerate z axis: every ellipse spans the single slice

    gx = (np.arange(nx) / nx)[:, None, None]
    gy = (np.arange(ny) / ny)[None, :, None]
    gz = (np.arange(nz) / nz)[None, None, :]

    layers = np.zeros((nx, ny, nz, ne), dtype=np.float64)
    for e in range(ne):
        ca, sa = np.cos(angles[e]), np.sin(angles[e])
        dx = gx - centers[e, 0]
        dy = gy - centers[e, 1]
        dz = gz - centers[e, 2] if nz > 1 else np.zeros_like(gz)
        xr = ca * dx + sa * dy
        yr = -sa * dx + ca * dy
        q = (xr / semi[e, 0]) ** 2 + (yr / semi[e, 1]) ** 2 + (dz / semi[e, 2]) ** 2
        layer = amps[e] * (q <= 1.0)
        if spec.smooth_sigma > 0:
            sig = [spec.smooth_sigma, spec.smooth_sigma, spec.smooth_sigma if nz > 1 else 0.0]
            layer = gaussian_filter(layer, sigma=sig, mode="wrap")
        layers[..., e] = layer

    images = np.zeros((nx, ny, nz, nt), dtype=np.float64)
    for t in range(nt):
        theta = 2 * np.pi * t / nt
        mod = np.ones(ne)
        if nt > 1:
            mod = mod + depth * np.cos(theta + phases)
        images[..., t] = layers @ mod
    return images


def _coil_fields(spec: PhantomSpec, rng: np.random.Generator):
    nx, ny, nz, nc, _ = spec.shape
    cx, cy, cz = spec.coil_support
    kernels = rng.standard_normal((cx, cy, cz, nc)) + 1j * rng.standard_normal((cx, cy, cz, nc))
    kernels[cx // 2, cy // 2, cz // 2, :] += 2.0  # DC boost keeps sensitivities well conditioned
    embedded = np.zeros((nx, ny, nz, nc, 1), dtype=np.complex128)
    sx, sy, sz = nx // 2 - cx // 2, ny // 2 - cy // 2, nz // 2 - cz // 2
    embedded[sx:sx + cx, sy:sy + cy, sz:sz + cz, :, 0] = kernels
    sens = centered_ifft_spatial(embedded)[..., 0]
    return kernels, sens


def measure_rank(d_full: np.ndarray, kernel: ConvSpec, rel_cut: float = 1e-8) -> int:
    """Numerical rank: Gram eigenvalues above rel_cut times the largest."""
    values = np.linalg.eigvalsh(gram_matrix(d_full, kernel))
    return int(np.count_nonzero(values > rel_cut * values[-1]))


def generate_phantom_data(spec: PhantomSpec, kernel: ConvSpec | None = None) -> PhantomData:
    """Build the full phantom bundle; rank is measured when a kernel is given."""
    rng = np.random.default_rng(spec.seed)
    images = _render_images(spec, rng)
    kernels, sens = _coil_fields(spec, rng)
    product = images[:, :, :, None, :] * sens[:, :, :, :, None]
    d_full = centered_fft_spatial(product)
    rank = measure_rank(d_full, kernel) if kernel is not None else None
    return PhantomData(d_full=d_full, images=images, sens=sens, coil_kernels=kernels, true_rank=rank)


def generate_phantom(spec: PhantomSpec, kernel: ConvSpec | None = None):
    """(d_full, true_rank) for the given phantom spec.

    The reported rank is relative to the reconstruction kernel, so it is
    only measured when one is supplied (None otherwise).
    """
    data = generate_phantom_data(spec, kernel)
    return data.d_full, data.true_rank


MASK_KINDS = ("uniform2d", "uniform2d_acs", "lines1d_acs", "vardens_t")


@dataclass(frozen=True)
class MaskSpec:
    """Sampling pattern request: kind, acceleration, calibration extents."""

    kind: str
    accel: float
    acs_extent: tuple = (0, 0, 0)
    seed: int = 0
    vardens_sigma_frac: float = 0.25

    def __post_init__(self):
        if self.kind not in MASK_KINDS:
            raise MaskSpecError(f"unknown mask kind {self.kind!r}; options: {MASK_KINDS}")
        if not self.accel > 1:
            raise MaskSpecError(f"acceleration must exceed 1, got {self.accel}")
        acs = tuple(int(v) for v in self.acs_extent)
        if len(acs) != 3 or any(v < 0 for v in acs):
            raise MaskSpecError(f"acs_extent needs 3 nonnegative extents, got {acs!r}")
        object.__setattr__(self, "acs_extent", acs)


def _centered_range(extent: int, size: int) -> slice:
    start = extent // 2 - size // 2
    return slice(start, start + size)


def _plane_axes(shape: Shape5) -> tuple:
    # Pointwise randomness lives in (kx, ky) for single-slab data, else in
    # (ky, kz) with the readout dim kx fully sampled.
    return (0, 1) if shape.nz == 1 else (1, 2)


def generate_mask(spec: MaskSpec, shape) -> np.ndarray:
    """Boolean sampling mask of the given 5-D shape, identical across coils.

    The observed fraction lands within +-10% of 1/accel (exact-count draws);
    any calibration box/band is always fully observed.
    """
    shape = Shape5.of(shape)
    rng = np.random.default_rng(spec.seed)
    if spec.kind in ("uniform2d", "uniform2d_acs"):
        plane = _mask_uniform_plane(spec, shape, rng)
        return _broadcast_plane(plane, shape)
    if spec.kind == "lines1d_acs":
        return _mask_lines(spec, shape, rng)
    return _mask_vardens_t(spec, shape, rng)


def _acs_plane_box(spec: MaskSpec, shape: Shape5, axes) -> np.ndarray:
    n0, n1 = shape[axes[0]], shape[axes[1]]
    e = spec.acs_extent
    a0, a1 = (e[0], e[1]) if axes == (0, 1) else (e[1], e[2])
    if a0 > n0 or a1 > n1:
        raise MaskSpecError(f"calibration box ({a0}, {a1}) exceeds plane ({n0}, {n1})")
    box = np.zeros((n0, n1), dtype=bool)
    if a0 > 0 and a1 > 0:
        box[_centered_range(n0, a0), _centered_range(n1, a1)] = True
    return box


def _mask_uniform_plane(spec: MaskSpec, shape: Shape5, rng) -> np.ndarray:
    axes = _plane_axes(shape)
    n0, n1 = shape[axes[0]], shape[axes[1]]
    total = n0 * n1
    target = int(round(total / spec.accel))
    plane = np.zeros((n0, n1), dtype=bool)
    if spec.kind == "uniform2d_acs":
        plane |= _acs_plane_box(spec, shape, axes)
    n_acs = int(plane.sum())
    if n_acs > target:
        raise MaskSpecError(
            f"calibration box holds {n_acs} samples but acceleration {spec.accel} "
            f"allows only {target}"
        )
    free = np.flatnonzero(~plane.ravel())
    picks = rng.choice(free, size=target - n_acs, replace=False)
    flat = plane.ravel()
    flat[picks] = True
    return flat.reshape(n0, n1)


def _broadcast_plane(plane: np.ndarray, shape: Shape5) -> np.ndarray:
    mask = np.zeros(tuple(shape), dtype=bool)
    if plane.shape == (shape.nx, shape.ny):
        mask |= plane[:, :, None, None, None]
    else:
        mask |= plane[None, :, :, None, None]
    return mask


def _mask_lines(spec: MaskSpec, shape: Shape5, rng) -> np.ndarray:
    if shape.nz != 1:
        raise MaskSpecError("line sampling is defined for single-slab (nz == 1) data")
    ny = shape.ny
    n_acs = spec.acs_extent[1]
    if n_acs > ny:
        raise MaskSpecError(f"{n_acs} calibration lines exceed grid extent {ny}")
    target = int(round(ny / spec.accel))
    lines = np.zeros(ny, dtype=bool)
    lines[_centered_range(ny, n_acs)] = True
    if int(lines.sum()) > target:
        raise MaskSpecError(
            f"{n_acs} calibration lines exceed the {target} lines allowed at accel {spec.accel}"
        )
    free = np.flatnonzero(~lines)
    picks = rng.choice(free, size=target - int(lines.sum()), replace=False)
    lines[picks] = True
    mask = np.zeros(tuple(shape), dtype=bool)
    mask |= lines[None, :, None, None, None]
    return mask


def _mask_vardens_t(spec: MaskSpec, shape: Shape5, rng) -> np.ndarray:
    if shape.nz != 1:
        raise MaskSpecError("variable-density time sampling is defined for nz == 1 data")
    ny, nt = shape.ny, shape.nt
    n_band = spec.acs_extent[1]
    if n_band > ny:
        raise MaskSpecError(f"center band {n_band} exceeds grid extent {ny}")
    target = int(round(ny / spec.accel))
    band = np.zeros(ny, dtype=bool)
    band[_centered_range(ny, n_band)] = True
    if int(band.sum()) > target:
        raise MaskSpecError(
            f"center band of {n_band} lines exceeds the {target} lines allowed at accel {spec.accel}"
        )
    center = (ny - 1) / 2.0
    sigma = max(spec.vardens_sigma_frac * ny, 1e-3)
    weight = np.exp(-((np.arange(ny) - center) ** 2) / (2 * sigma**2))
    mask = np.zeros(tuple(shape), dtype=bool)
    for t in range(nt):
        lines = band.copy()
        free = np.flatnonzero(~lines)
        w = weight[free]
        picks = rng.choice(free, size=target - int(lines.sum()), replace=False, p=w / w.sum())
        lines[picks] = True
        mask[:, :, :, :, t] |= lines[None, :, None, None]
    return mask


FORMAT_VERSION = 1
_ORDER_TAG = "col-major kx,ky,kz,coil,t"
_DTYPES = {"c128": np.dtype("<c16"), "c64": np.dtype("<c8"), "u8": np.dtype("u1")}


def _paths(path) -> tuple:
    p = Path(path)
    if p.suffix != ".cfk":
        p = p.with_name(p.name + ".cfk")
    return p, p.with_name(p.name + ".json")


def write_tensor(path, tensor: np.ndarray) -> Path:
    """Write a 5-D tensor as <name>.cfk (raw, column-major) + <name>.cfk.json."""
    tensor = check_kspace(tensor, "tensor")
    if tensor.dtype == np.complex128:
        tag = "c128"
    elif tensor.dtype == np.complex64:
        tag = "c64"
    elif tensor.dtype == bool or tensor.dtype == np.uint8:
        tag = "u8"
        tensor = tensor.astype(np.uint8)
    else:
        raise TensorFileError(f"unsupported dtype {tensor.dtype}; use c64, c128, or u8 masks")
    bin_path, hdr_path = _paths(path)
    header = {
        "format_version": FORMAT_VERSION,
        "dims": [int(v) for v in tensor.shape],
        "dtype": tag,
        "order": _ORDER_TAG,
        "endian": "little",
    }
    payload = np.asarray(tensor, dtype=_DTYPES[tag]).reshape(-1, order="F")
    bin_path.write_bytes(payload.tobytes())
    hdr_path.write_text(json.dumps(header, indent=1) + "\n")
    return bin_path


def read_tensor(path) -> np.ndarray:
    """Read a .cfk tensor; returns the stored dtype (c128/c64 complex, u8 masks)."""
    bin_path, hdr_path = _paths(path)
    if not hdr_path.exists():
        raise TensorFileError(f"missing header file {hdr_path}")
    if not bin_path.exists():
        raise TensorFileError(f"missing payload file {bin_path}")
    try:
        header = json.loads(hdr_path.read_text())
    except json.JSONDecodeError as exc:
        raise TensorFileError(f"malformed header {hdr_path}: {exc}") from exc
    for key in ("format_version", "dims", "dtype", "order", "endian"):
        if key not in header:
            raise TensorFileError(f"header {hdr_path} lacks required field {key!r}")
    if header["format_version"] != FORMAT_VERSION:
        raise TensorFileError(f"unsupported format version {header['format_version']}")
    if header["order"] != _ORDER_TAG or header["endian"] != "little":
        raise TensorFileError(f"unsupported layout {header['order']!r}/{header['endian']!r}")
    if header["dtype"] not in _DTYPES:
        raise TensorFileError(f"unknown dtype tag {header['dtype']!r}")
    dims = header["dims"]
    if len(dims) != 5 or any(int(v) < 1 for v in dims):
        raise TensorFileError(f"header dims must be 5 positive extents, got {dims!r}")
    dtype = _DTYPES[header["dtype"]]
    raw = bin_path.read_bytes()
    count = int(np.prod(dims, dtype=np.int64))
    if len(raw) != count * dtype.itemsize:
        raise TensorFileError(
            f"payload holds {len(raw)} bytes but header implies {count * dtype.itemsize}"
        )
    flat = np.frombuffer(raw, dtype=dtype)
    arr = flat.reshape(tuple(int(v) for v in dims), order="F")
    if header["dtype"] == "c128":
        return arr.astype(np.complex128)
    if header["dtype"] == "c64":
        return arr.astype(np.complex64)
    return arr.astype(np.uint8)


def read_mask(path) -> np.ndarray:
    """Read a u8 mask file as boolean."""
    arr = read_tensor(path)
    if arr.dtype != np.uint8:
        raise TensorFileError(f"{path} is not a u8 mask file")
    if not np.all(np.isin(arr, (0, 1))):
        raise TensorFileError(f"{path} holds values other than 0/1")
    return arr.astype(bool)
