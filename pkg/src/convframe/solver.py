"""Iterative k-space completion by annihilating-filter null-space enforcement.

The outer loop alternates filter estimation (Gram eigendecomposition of the
current estimate) with a data-consistent least-squares update solved by
gradient descent with an exact line search.  All heavy products are computed
from data windows in fixed-size blocks, so working memory stays on the order
of the data tensor; the Hankel matrix itself is never formed except inside
the small-scale Cadzow-style baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import CIRCULAR, VALID, ConvSpec, Shape5, ShapeMismatchError, check_kspace, vec
from .hankel import (
    COMPLEX_BYTES,
    HankelOperator,
    default_block_columns,
    explicit_hankel,
    gram_matrix,
    hankel_matrix_shape,
)
from .core import kernel_window_offsets, nd_convolve, nd_convolve_adjoint
from .hankel import _column_indices
from .nullspace import FilterBank, filters_from_nullspace, hermitian_eig, split_by_rank


class MaskError(ValueError):
    """Degenerate or inconsistent sampling mask."""


class AcsError(ValueError):
    """Calibration region missing, too small, or not fully sampled."""


@dataclass(frozen=True)
class ObservedData:
    """Zero-filled observed k-space plus its boolean sampling mask."""

    d_obs: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        d = check_kspace(self.d_obs, "d_obs").astype(np.complex128, copy=False)
        m = check_kspace(self.mask, "mask")
        if m.shape != d.shape:
            raise ShapeMismatchError(f"mask shape {m.shape} != data shape {d.shape}")
        if m.dtype != bool:
            vals = np.unique(m)
            if not np.all(np.isin(vals, (0, 1))):
                raise MaskError("mask entries must be 0/1")
            m = m.astype(bool)
        if np.any(d[~m] != 0):
            raise MaskError("observed data must be exactly zero at unobserved positions")
        object.__setattr__(self, "d_obs", d)
        object.__setattr__(self, "mask", m)

    @classmethod
    def from_full(cls, d_full: np.ndarray, mask: np.ndarray) -> "ObservedData":
        d_full = check_kspace(d_full, "d_full").astype(np.complex128, copy=False)
        mask = check_kspace(mask, "mask").astype(bool)
        d_obs = np.where(mask, d_full, 0)
        return cls(d_obs=d_obs, mask=mask)

    @property
    def shape(self) -> Shape5:
        return Shape5.of(self.d_obs.shape)


@dataclass(frozen=True)
class ReconConfig:
    """Solver configuration: kernel layout, rank, and iteration budgets."""

    kernel_spec: ConvSpec
    rank: int
    tol: float = 1e-3
    max_outer: int = 200
    inner_max: int = 30
    inner_grad_tol: float = 1e-6
    acs_region: tuple | None = None

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_outer < 1:
            raise ValueError(f"max_outer must be >= 1, got {self.max_outer}")
        if self.inner_max < 1:
            raise ValueError(f"inner_max must be >= 1, got {self.inner_max}")
        size = self.kernel_spec.kernel_size
        if not 0 < self.rank < size:
            raise ValueError(
                f"rank must lie strictly between 0 and kernel size {size}, got {self.rank}"
            )


@dataclass
class ReconResult:
    """Recovered k-space with per-outer-iteration convergence history."""

    d_hat: np.ndarray
    outer_iters: int
    delta_history: list = field(default_factory=list)
    objective_history: list = field(default_factory=list)


def annihilation_objective(d: np.ndarray, filters: FilterBank) -> float:
    """Sum of squared Frobenius norms of all filter responses of d."""
    d = check_kspace(d, "d")
    total = 0.0
    for kernel in filters:
        r = nd_convolve(d, kernel, filters.spec)
        total += float(np.vdot(r, r).real)
    return total


def annihilation_gradient(d: np.ndarray, filters: FilterBank) -> np.ndarray:
    """Descent direction sum_i adjoint_conv(d conv F_i, F_i).

    The Wirtinger gradient of :func:`annihilation_objective` is twice this;
    the factor is irrelevant under an exact line search.
    """
    d = check_kspace(d, "d")
    out = np.zeros(d.shape, dtype=np.complex128)
    shape = Shape5.of(d.shape)
    for kernel in filters:
        r = nd_convolve(d, kernel, filters.spec)
        out += nd_convolve_adjoint(r, kernel, filters.spec, shape)
    return out


def _response_pass_windows(d, filters: FilterBank, want_grad: bool, budget_bytes=None):
    """Blocked evaluation of (objective, gradient) over all filters.

    Equivalent to per-filter convolutions but organized as window-block
    matrix products: residual block R = H(d) @ V[:, fblk], gradient
    accumulated by scattering R @ V[:, fblk]^H back into the data windows.
    Working memory: a few blocks of at most the data size each.
    """
    spec = filters.spec
    shape = Shape5.of(d.shape)
    rows, cols = hankel_matrix_shape(shape, spec)
    vmat = filters.matrix
    nf = vmat.shape[1]
    offsets = kernel_window_offsets(spec)
    if budget_bytes is None:
        budget_bytes = d.size * COMPLEX_BYTES
    bwidth = max(1, min(max(nf, 1), budget_bytes // (rows * COMPLEX_BYTES)))
    bcols = max(1, min(cols, budget_bytes // (rows * COMPLEX_BYTES)))

    obj = 0.0
    grad = np.zeros(d.shape, dtype=np.complex128) if want_grad else None
    out_shape = tuple(spec.output_shape(shape))
    for f0 in range(0, nf, bwidth):
        f1 = min(f0 + bwidth, nf)
        resid = np.zeros((rows, f1 - f0), dtype=np.complex128)
        for c0 in range(0, cols, bcols):
            c1 = min(c0 + bcols, cols)
            block = np.empty((rows, c1 - c0), dtype=np.complex128)
            for j in range(c0, c1):
                block[:, j - c0] = vec(d[_column_indices(shape, spec, offsets[j])])
            resid += block @ vmat[c0:c1, f0:f1]
        obj += float(np.vdot(resid, resid).real)
        if want_grad:
            for c0 in range(0, cols, bcols):
                c1 = min(c0 + bcols, cols)
                back = resid @ vmat[c0:c1, f0:f1].conj().T
                for j in range(c0, c1):
                    grad[_column_indices(shape, spec, offsets[j])] += back[:, j - c0].reshape(
                        out_shape, order="F"
                    )
    return obj, grad


def _extract_index(shape: Shape5, spec: ConvSpec) -> tuple:
    """Where filter responses live inside the size-m circular convolution.

    With the kernel embedded at the origin, a full-size circular FFT product
    equals the response at position p + (n-1) per dimension; valid outputs
    are the alias-free crop [n-1, m), circular outputs the same start with
    wrap-around.
    """
    index = []
    for d in range(5):
        n, m = spec.kernel_shape[d], shape[d]
        if spec.kinds[d] == VALID:
            index.append(np.arange(n - 1, m))
        else:
            index.append((np.arange(m) + (n - 1)) % m)
    return np.ix_(*index)


def _response_pass_fft(d, filters: FilterBank, want_grad: bool, budget_bytes=None):
    """FFT realization of the same (objective, gradient) evaluation.

    One full-size spectrum of the data is shared across filters; each filter
    costs a forward and (for the gradient) an inverse transform, with the
    gradient accumulated in the frequency domain and transformed back once.
    Matches the window engine to ~1e-13 relative; working memory is a few
    full-size spectra regardless of the filter count.
    """
    spec = filters.spec
    shape = Shape5.of(d.shape)
    spec.validate_for(shape)
    dims = tuple(shape)
    crop = _extract_index(shape, spec)
    ks = tuple(spec.kernel_shape)
    kernel_sl = tuple(slice(0, k) for k in ks)

    d_hat = np.fft.fftn(np.asarray(d, dtype=np.complex128))
    grad_hat = np.zeros(dims, dtype=np.complex128) if want_grad else None
    obj = 0.0
    pad = np.zeros(dims, dtype=np.complex128)
    emb = np.zeros(dims, dtype=np.complex128) if want_grad else None
    for i in range(filters.count):
        pad[kernel_sl] = filters.kernel(i)
        f_hat = np.fft.fftn(pad)
        resid = np.fft.ifftn(f_hat * d_hat)[crop]
        obj += float(np.vdot(resid, resid).real)
        if want_grad:
            emb[crop] = resid
            femb = np.fft.fftn(emb)
            np.conj(f_hat, out=f_hat)
            f_hat *= femb
            grad_hat += f_hat
            del femb
            emb[crop] = 0.0
        del f_hat, resid
    grad = None
    if want_grad:
        grad = np.fft.ifftn(grad_hat)
    return obj, grad


def _response_pass(d, filters: FilterBank, want_grad: bool, budget_bytes=None, engine: str = "fft"):
    if engine == "fft":
        return _response_pass_fft(d, filters, want_grad, budget_bytes)
    if engine == "windows":
        return _response_pass_windows(d, filters, want_grad, budget_bytes)
    raise ValueError(f"unknown engine {engine!r}")


def gd_els_solve(obs: ObservedData, filters: FilterBank, cfg: ReconConfig,
                 x0: np.ndarray | None = None, history: list | None = None) -> np.ndarray:
    """Data-consistent filter-response minimization over the unobserved entries.

    Steepest descent with the closed-form optimal step for the quadratic
    objective sum_i ||(d_obs + X) conv F_i||_F^2, constrained to X == 0 on
    observed positions (held exactly at every iterate).  Stops when the
    gradient norm falls below inner_grad_tol relative to its initial value,
    the step budget is exhausted, or the search direction is annihilated by
    every filter.  If ``history`` is a list, the objective value at each
    iterate is appended to it (non-increasing).
    """
    mask = obs.mask
    x = np.zeros(obs.d_obs.shape, dtype=np.complex128) if x0 is None else x0.astype(np.complex128, copy=True)
    x[mask] = 0

    obj, grad = _response_pass(obs.d_obs + x, filters, want_grad=True)
    grad[mask] = 0
    if history is not None:
        history.append(obj)
    gnorm0 = float(np.linalg.norm(grad))

    for _ in range(cfg.inner_max):
        gnorm_sq = float(np.vdot(grad, grad).real)
        if gnorm_sq == 0.0 or np.sqrt(gnorm_sq) <= cfg.inner_grad_tol * gnorm0:
            break
        denom, _ = _response_pass(grad, filters, want_grad=False)
        if denom <= 0.0:
            break  # direction annihilated by every filter: objective flat
        alpha = gnorm_sq / denom
        x -= alpha * grad
        obj, grad = _response_pass(obs.d_obs + x, filters, want_grad=True)
        grad[mask] = 0
        if history is not None:
            history.append(obj)
    return x


def _check_mask_nondegenerate(obs: ObservedData):
    if not obs.mask.any():
        raise MaskError("mask observes no samples; nothing to reconstruct from")


def _normalization(obs: ObservedData) -> float:
    scale = float(np.linalg.norm(obs.d_obs))
    if scale == 0.0:
        raise MaskError("observed samples are all zero; reconstruction is undefined")
    return scale


def _finalize(d_hat_scaled: np.ndarray, scale: float, obs: ObservedData) -> np.ndarray:
    d_hat = d_hat_scaled * scale
    d_hat[obs.mask] = obs.d_obs[obs.mask]
    return d_hat


def _snapshot(d_hat_scaled: np.ndarray, scale: float, obs: ObservedData) -> np.ndarray:
    return _finalize(d_hat_scaled.copy(), scale, obs)


def cf_reconstruct(obs: ObservedData, cfg: ReconConfig, callback=None) -> ReconResult:
    """Full iterative reconstruction: re-estimate filters, enforce, repeat.

    Per outer iteration: Gram matrix of the current estimate, Hermitian
    eigendecomposition, rank split, filter extraction, inner data-consistent
    solve (warm-started), then the relative-change stopping test
    ||new - old||_F / ||old||_F <= tol.  Observed samples are returned
    bit-identical to the input.  ``callback(n, d_hat, delta)`` runs after
    each outer iteration; a truthy return stops early.
    """
    _check_mask_nondegenerate(obs)
    cfg.kernel_spec.validate_for(obs.d_obs.shape)
    if obs.mask.all():
        return ReconResult(d_hat=obs.d_obs.copy(), outer_iters=0)

    scale = _normalization(obs)
    d_obs_n = obs.d_obs / scale
    obs_n = ObservedData(d_obs=d_obs_n, mask=obs.mask)

    x = np.zeros(obs.d_obs.shape, dtype=np.complex128)
    d_prev = d_obs_n.copy()
    deltas: list = []
    objectives: list = []
    iters = 0
    for n in range(1, cfg.max_outer + 1):
        eig = hermitian_eig(gram_matrix(d_obs_n + x, cfg.kernel_spec), overwrite=True)
        _, v_perp = split_by_rank(eig, cfg.rank)
        filters = filters_from_nullspace(v_perp, cfg.kernel_spec)
        del eig, v_perp

        inner_hist: list = []
        x = gd_els_solve(obs_n, filters, cfg, x0=x, history=inner_hist)
        d_hat = d_obs_n + x
        delta = float(np.linalg.norm(d_hat - d_prev) / np.linalg.norm(d_prev))
        deltas.append(delta)
        objectives.append(inner_hist[-1] * scale**2)
        iters = n
        d_prev = d_hat
        if callback is not None and callback(n, _snapshot(d_hat, scale, obs), delta):
            break
        if delta <= cfg.tol:
            break

    return ReconResult(
        d_hat=_finalize(d_prev, scale, obs),
        outer_iters=iters,
        delta_history=deltas,
        objective_history=objectives,
    )


def _acs_box(cfg: ReconConfig, shape: Shape5) -> tuple:
    if cfg.acs_region is None:
        raise AcsError("config has no calibration region")
    box = tuple(tuple(int(v) for v in pair) for pair in cfg.acs_region)
    if len(box) == 2:
        box = box + (((0, shape.nz)),)
    if len(box) != 3:
        raise AcsError(f"calibration box needs 2 or 3 (start, stop) pairs, got {cfg.acs_region!r}")
    for d, (lo, hi) in enumerate(box):
        if not 0 <= lo < hi <= shape[d]:
            raise AcsError(f"calibration box {box[d]} does not fit axis of extent {shape[d]}")
    return box


def cf_reconstruct_with_acs(obs: ObservedData, cfg: ReconConfig, callback=None) -> ReconResult:
    """One-shot variant: filters estimated once from a calibration region.

    The Gram matrix is built from the fully sampled calibration sub-tensor
    (valid convolution inside the box on spatial dims), and a single inner
    solve with a 10x step budget enforces the fixed filters over the whole
    k-space.  There is no outer loop and no filter re-estimation.
    """
    _check_mask_nondegenerate(obs)
    shape = obs.shape
    cfg.kernel_spec.validate_for(shape)
    box = _acs_box(cfg, shape)
    ks = cfg.kernel_spec.kernel_shape
    for d, (lo, hi) in enumerate(box):
        if hi - lo < ks[d]:
            raise AcsError(
                f"calibration extent {hi - lo} on axis {d} is smaller than kernel extent {ks[d]}"
            )
    sl = (slice(box[0][0], box[0][1]), slice(box[1][0], box[1][1]), slice(box[2][0], box[2][1]))
    if not obs.mask[sl].all():
        raise AcsError("calibration region is not fully sampled")

    scale = _normalization(obs)
    d_obs_n = obs.d_obs / scale
    obs_n = ObservedData(d_obs=d_obs_n, mask=obs.mask)

    acs = d_obs_n[sl]
    acs_kinds = tuple(
        VALID if d < 3 else cfg.kernel_spec.kinds[d] for d in range(5)
    )
    acs_spec = ConvSpec(ks, acs_kinds)
    gram = gram_matrix(acs, acs_spec)
    eig = hermitian_eig(gram)
    _, v_perp = split_by_rank(eig, cfg.rank)
    filters = filters_from_nullspace(v_perp, cfg.kernel_spec)

    wide = replace(cfg, inner_max=cfg.inner_max * 10)
    inner_hist: list = []
    x = gd_els_solve(obs_n, filters, wide, history=inner_hist)
    d_hat = d_obs_n + x
    if callback is not None:
        callback(0, _snapshot(d_hat, scale, obs), float("nan"))
    return ReconResult(
        d_hat=_finalize(d_hat, scale, obs),
        outer_iters=0,
        delta_history=[],
        objective_history=[inner_hist[-1] * scale**2],
    )


def _structure_counts(shape: Shape5, spec: ConvSpec) -> np.ndarray:
    counts = np.zeros(tuple(shape), dtype=np.float64)
    offsets = kernel_window_offsets(spec)
    for j in range(spec.kernel_size):
        counts[_column_indices(shape, spec, offsets[j])] += 1.0
    return counts


def cadzow_baseline(obs: ObservedData, cfg: ReconConfig, callback=None,
                    max_iters: int | None = None, rank: int | None = None) -> ReconResult:
    """Alternating-projection baseline on the explicit Hankel matrix.

    Per iteration: build the dense Hankel matrix of the estimate, truncate to
    rank r by SVD, project back to Hankel structure by averaging all matrix
    entries that map to the same tensor sample, then re-impose the observed
    samples.  Small problems only (the dense matrix must fit under the
    explicit-Hankel entry cap); serves as an independent comparison method.
    The recorded objective is the truncated tail energy sum_{i>r} sigma_i^2.
    """
    _check_mask_nondegenerate(obs)
    shape = obs.shape
    spec = cfg.kernel_spec
    spec.validate_for(shape)
    r = cfg.rank if rank is None else int(rank)
    if not 0 < r <= spec.kernel_size:
        raise ValueError(f"rank must lie in (0, {spec.kernel_size}], got {r}")

    scale = _normalization(obs)
    d_obs_n = obs.d_obs / scale
    counts = _structure_counts(shape, spec)
    offsets = kernel_window_offsets(spec)
    out_shape = tuple(spec.output_shape(shape))

    d_hat = d_obs_n.copy()
    deltas: list = []
    objectives: list = []
    iters = 0
    cap = cfg.max_outer if max_iters is None else int(max_iters)
    for n in range(1, cap + 1):
        h = explicit_hankel(HankelOperator(d_hat, spec))
        u, s, vh = np.linalg.svd(h, full_matrices=False)
        objectives.append(float(np.sum(s[r:] ** 2)) * scale**2)
        h_r = (u[:, :r] * s[:r]) @ vh[:r]
        acc = np.zeros(tuple(shape), dtype=np.complex128)
        for j in range(spec.kernel_size):
            acc[_column_indices(shape, spec, offsets[j])] += h_r[:, j].reshape(out_shape, order="F")
        d_new = acc / counts
        d_new[obs.mask] = d_obs_n[obs.mask]
        delta = float(np.linalg.norm(d_new - d_hat) / np.linalg.norm(d_hat))
        deltas.append(delta)
        d_hat = d_new
        iters = n
        if callback is not None and callback(n, _snapshot(d_hat, scale, obs), delta):
            break
        if delta <= cfg.tol:
            break

    return ReconResult(
        d_hat=_finalize(d_hat, scale, obs),
        outer_iters=iters,
        delta_history=deltas,
        objective_history=objectives,
    )
