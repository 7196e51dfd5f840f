import numpy as np
import pytest

from convframe import (
    ConvSpec,
    PhantomSpec,
    Shape5,
    ShapeMismatchError,
    centered_ifft_spatial,
    error_map_pgm,
    generate_phantom,
    kspace_snr_db,
    ssos_image,
)
from conftest import brute_centered_ifft_spatial


class TestKspaceSnr:
    def test_identical_tensors_capped(self, rng):
        x = rng.standard_normal((4, 4, 1, 2, 1)) + 0j
        assert kspace_snr_db(x, x) == 300.0

    def test_twenty_db_from_definition(self):
        ref = np.zeros((4, 4, 1, 1, 1), complex)
        ref[0, 0] = 10.0
        rec = ref.copy()
        rec[1, 1] = 1.0
        assert abs(kspace_snr_db(ref, rec) - 20.0) <= 1e-12

    def test_matches_independent_recomputation(self, rng):
        ref = rng.standard_normal((8, 8, 1, 2, 1)) + 1j * rng.standard_normal((8, 8, 1, 2, 1))
        rec = ref + 0.01 * (rng.standard_normal(ref.shape) + 1j * rng.standard_normal(ref.shape))
        expected = 20.0 * np.log10(
            np.sqrt((np.abs(ref) ** 2).sum()) / np.sqrt((np.abs(rec - ref) ** 2).sum())
        )
        assert abs(kspace_snr_db(ref, rec) - expected) <= 1e-12

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeMismatchError):
            kspace_snr_db(np.zeros((2, 2, 1, 1, 1)), np.zeros((3, 2, 1, 1, 1)))


class TestSsos:
    def test_single_coil_is_ifft_magnitude(self, rng):
        d = rng.standard_normal((6, 6, 1, 1, 2)) + 1j * rng.standard_normal((6, 6, 1, 1, 2))
        img = ssos_image(d, 1)
        ref = np.abs(centered_ifft_spatial(d)[..., 0, 1])
        np.testing.assert_allclose(img, ref, rtol=1e-12, atol=1e-14)

    def test_two_identical_coils_scale_sqrt2(self, rng):
        d1 = rng.standard_normal((6, 6, 1, 1, 1)) + 1j * rng.standard_normal((6, 6, 1, 1, 1))
        d2 = np.concatenate([d1, d1], axis=3)
        np.testing.assert_allclose(ssos_image(d2, 0), np.sqrt(2) * ssos_image(d1, 0), rtol=1e-12)

    def test_matches_bruteforce_dft(self):
        spec = PhantomSpec(shape=Shape5(8, 6, 1, 2, 1), coil_support=(2, 2, 1), seed=4)
        d_full, _ = generate_phantom(spec)
        fast = ssos_image(d_full, 0)
        slow_img = brute_centered_ifft_spatial(d_full[..., 0:1])[..., 0]
        slow = np.sqrt((np.abs(slow_img) ** 2).sum(axis=3))
        np.testing.assert_allclose(fast, slow, rtol=1e-10, atol=1e-12)

    def test_frame_out_of_range(self, rng):
        d = rng.standard_normal((4, 4, 1, 1, 2)) + 0j
        with pytest.raises(IndexError):
            ssos_image(d, 2)


class TestErrorMapPgm:
    def test_identical_images_all_zero(self, tmp_path, rng):
        img = np.abs(rng.standard_normal((6, 5))) + 0.1
        path = error_map_pgm(img, img, 10.0, tmp_path / "e.pgm")
        raw = path.read_bytes()
        header, pixels = raw.split(b"65535\n", 1)
        assert header == b"P5\n5 6\n"
        assert pixels == bytes(2 * 6 * 5)

    def test_midscale_pixel_value(self, tmp_path):
        ref = np.ones((2, 2))
        rec = np.ones((2, 2))
        rec[0, 0] = 1.05  # error 5% of peak, x10 scale -> 0.5 of full range
        path = error_map_pgm(ref, rec, 10.0, tmp_path / "e.pgm")
        pixels = np.frombuffer(path.read_bytes().split(b"65535\n", 1)[1], dtype=">u2").reshape(2, 2)
        assert pixels[0, 0] == 32768  # round(0.5 * 65535)
        assert pixels[1, 1] == 0

    def test_golden_fixture(self, tmp_path):
        import pathlib

        rng = np.random.default_rng(99)
        ref = np.abs(rng.standard_normal((8, 8))) + 0.2
        rec = ref + 0.02 * rng.standard_normal((8, 8))
        path = error_map_pgm(ref, rec, 10.0, tmp_path / "g.pgm")
        golden = pathlib.Path(__file__).parent / "fixtures" / "error_map_seed99.pgm"
        assert path.read_bytes() == golden.read_bytes()

    def test_scale_must_be_positive(self, tmp_path):
        with pytest.raises(ValueError):
            error_map_pgm(np.ones((2, 2)), np.ones((2, 2)), 0.0, tmp_path / "e.pgm")
