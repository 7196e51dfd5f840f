"""Reconstruction quality metrics and simple image outputs.

SNR convention used throughout (the one number quoted by the CLI):

    snr_db = 20 * log10(||ref||_F / ||rec - ref||_F)

computed over the whole k-space tensor.  An image-domain variant applies the
same formula to the stacked coil-combined (SSoS) magnitude images; both are
reported and labeled by the eval command.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ShapeMismatchError, centered_ifft_spatial, check_kspace

SNR_CAP_DB = 300.0


@dataclass
class EvalReport:
    """Quantities reported for one reconstruction run."""

    kspace_snr_db: float
    image_snr_db: float
    outer_iters: int = 0
    wall_time_s: float = 0.0
    peak_bytes: int = 0
    delta_history: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "kspace_snr_db": self.kspace_snr_db,
            "image_snr_db": self.image_snr_db,
            "outer_iters": self.outer_iters,
            "wall_time_s": self.wall_time_s,
            "peak_bytes": self.peak_bytes,
            "delta_history": list(self.delta_history),
        }


def _snr_db(ref: np.ndarray, rec: np.ndarray) -> float:
    if ref.shape != rec.shape:
        raise ShapeMismatchError(f"reference shape {ref.shape} != reconstruction shape {rec.shape}")
    err = float(np.linalg.norm(rec - ref))
    if err == 0.0:
        return SNR_CAP_DB
    ref_norm = float(np.linalg.norm(ref))
    if ref_norm == 0.0:
        return -SNR_CAP_DB
    return float(min(20.0 * np.log10(ref_norm / err), SNR_CAP_DB))


def kspace_snr_db(ref: np.ndarray, rec: np.ndarray) -> float:
    """Whole-tensor k-space SNR in dB (capped at +-300)."""
    return _snr_db(check_kspace(ref, "ref"), check_kspace(rec, "rec"))


def ssos_image(d: np.ndarray, t: int = 0) -> np.ndarray:
    """Coil-combined magnitude image sqrt(sum_l |IFFT(d)[..., l, t]|^2)."""
    d = check_kspace(d, "d")
    if not 0 <= t < d.shape[4]:
        raise IndexError(f"frame {t} out of range for {d.shape[4]} frames")
    img = centered_ifft_spatial(d[..., t:t + 1])[..., 0]
    return np.sqrt(np.sum(np.abs(img) ** 2, axis=3))


def image_snr_db(ref: np.ndarray, rec: np.ndarray) -> float:
    """SNR of the SSoS magnitude images, stacked over all frames."""
    ref = check_kspace(ref, "ref")
    rec = check_kspace(rec, "rec")
    if ref.shape != rec.shape:
        raise ShapeMismatchError(f"reference shape {ref.shape} != reconstruction shape {rec.shape}")
    ref_imgs = np.stack([ssos_image(ref, t) for t in range(ref.shape[4])])
    rec_imgs = np.stack([ssos_image(rec, t) for t in range(rec.shape[4])])
    err = float(np.linalg.norm(rec_imgs - ref_imgs))
    if err == 0.0:
        return SNR_CAP_DB
    return float(min(20.0 * np.log10(np.linalg.norm(ref_imgs) / err), SNR_CAP_DB))


def error_map_pgm(ref_img: np.ndarray, rec_img: np.ndarray, scale: float, path) -> Path:
    """Write a scaled absolute-error map as 16-bit binary PGM (P5, maxval 65535).

    pixel = round(clamp(scale * |rec - ref| / max(ref), 0, 1) * 65535);
    rows follow the first array axis, columns the second.
    """
    ref_img = np.asarray(ref_img, dtype=np.float64)
    rec_img = np.asarray(rec_img, dtype=np.float64)
    if ref_img.ndim != 2 or ref_img.shape != rec_img.shape:
        raise ShapeMismatchError(
            f"expected two 2-D images of equal shape, got {ref_img.shape} and {rec_img.shape}"
        )
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    peak = float(ref_img.max())
    if peak <= 0:
        raise ValueError("reference image has no positive values to normalize by")
    err = np.clip(scale * np.abs(rec_img - ref_img) / peak, 0.0, 1.0)
    pixels = np.rint(err * 65535.0).astype(">u2")
    out = Path(path)
    h, w = pixels.shape
    out.write_bytes(f"P5\n{w} {h}\n65535\n".encode("ascii") + pixels.tobytes())
    return out


def image_pgm(img: np.ndarray, path) -> Path:
    """Write a magnitude image as 16-bit PGM, normalized to its own peak."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ShapeMismatchError(f"expected a 2-D image, got shape {img.shape}")
    peak = float(img.max())
    pixels = np.rint(np.clip(img / peak if peak > 0 else img, 0.0, 1.0) * 65535.0).astype(">u2")
    out = Path(path)
    h, w = pixels.shape
    out.write_bytes(f"P5\n{w} {h}\n65535\n".encode("ascii") + pixels.tobytes())
    return out
