import numpy as np
import pytest

from convframe import (
    ConvSpec,
    HankelOperator,
    RankRangeError,
    Shape5,
    explicit_hankel,
    filters_from_nullspace,
    gram_matrix,
    hermitian_eig,
    nd_convolve,
    split_by_rank,
    vec,
)
from convframe.dataset import PhantomSpec, generate_phantom
from conftest import random_spec


def random_psd(rng, side):
    a = rng.standard_normal((side, side)) + 1j * rng.standard_normal((side, side))
    return a @ a.conj().T


class TestHermitianEig:
    def test_diagonal(self):
        eig = hermitian_eig(np.diag([2.0, 1.0]).astype(complex))
        np.testing.assert_allclose(eig.values, [1.0, 2.0])
        np.testing.assert_allclose(np.abs(eig.vectors), [[0, 1], [1, 0]], atol=1e-14)

    def test_identity(self):
        eig = hermitian_eig(np.eye(4, dtype=complex))
        np.testing.assert_allclose(eig.values, np.ones(4))

    def test_reconstruction_and_orthonormality(self, rng):
        g = random_psd(rng, 20)
        eig = hermitian_eig(g)
        rebuilt = (eig.vectors * eig.values) @ eig.vectors.conj().T
        assert np.linalg.norm(rebuilt - g) <= 1e-10 * np.linalg.norm(g)
        gram_v = eig.vectors.conj().T @ eig.vectors
        assert np.linalg.norm(gram_v - np.eye(20)) <= 1e-10
        assert np.all(np.diff(eig.values) >= -1e-12 * abs(eig.values[-1]))

    def test_rejects_nonfinite(self):
        g = np.eye(3, dtype=complex)
        g[0, 0] = np.nan
        with pytest.raises(ValueError):
            hermitian_eig(g)

    def test_eigenvalues_are_squared_singular_values(self, rng):
        data, spec = random_spec(rng, max_extent=6)
        h = explicit_hankel(HankelOperator(data, spec))
        eig = hermitian_eig(gram_matrix(data, spec))
        sv = np.linalg.svd(h, compute_uv=False)
        np.testing.assert_allclose(
            np.sort(eig.values)[::-1][: sv.size], sv**2, rtol=1e-6, atol=1e-9 * max(sv[0] ** 2, 1)
        )


class TestSplitByRank:
    def test_smallest_goes_to_nullspace(self, rng):
        vals = np.array([0.1, 5.0, 9.0])
        vecs = np.eye(3, dtype=complex)
        from convframe.nullspace import EigenPair

        par, perp = split_by_rank(EigenPair(vals, vecs), 2)
        assert perp.shape == (3, 1)
        np.testing.assert_array_equal(perp[:, 0], vecs[:, 0])
        assert par.shape == (3, 2)

    def test_rank_one_below_size_gives_single_filter(self, rng):
        g = random_psd(rng, 6)
        eig = hermitian_eig(g)
        _, perp = split_by_rank(eig, 5)
        assert perp.shape == (6, 1)

    def test_rank_out_of_range(self, rng):
        eig = hermitian_eig(random_psd(rng, 4))
        for bad in (0, 4, 5, -1):
            with pytest.raises(RankRangeError):
                split_by_rank(eig, bad)


class TestFiltersFromNullspace:
    def test_count_and_unit_norm(self, rng):
        data, spec = random_spec(rng, max_extent=6)
        size = spec.kernel_size
        if size < 2:
            spec = ConvSpec(Shape5(2, 1, 1, data.shape[3], 1), spec.kinds)
            size = spec.kernel_size
        eig = hermitian_eig(gram_matrix(data, spec))
        rank = size // 2 if size > 1 else 1
        rank = max(1, min(rank, size - 1))
        _, perp = split_by_rank(eig, rank)
        bank = filters_from_nullspace(perp, spec)
        assert bank.count == size - rank
        for i in range(bank.count):
            assert abs(np.linalg.norm(bank.kernel(i)) - 1.0) <= 1e-10

    def test_response_equals_hankel_product(self, rng):
        # vec(D conv F) == H @ v exactly, for arbitrary (not just null) vectors
        for _ in range(20):
            data, spec = random_spec(rng, max_extent=6)
            h = explicit_hankel(HankelOperator(data, spec))
            v = rng.standard_normal(spec.kernel_size) + 1j * rng.standard_normal(spec.kernel_size)
            v /= np.linalg.norm(v)
            bank = filters_from_nullspace(v[:, None], spec)
            resp = vec(nd_convolve(data, bank.kernel(0), spec))
            ref = h @ v
            assert np.linalg.norm(resp - ref) <= 1e-12 * max(np.linalg.norm(ref), 1e-30)

    def test_annihilation_on_exact_low_rank_data(self):
        spec = ConvSpec(Shape5(3, 3, 1, 2, 1))
        d_full, rank = generate_phantom(
            PhantomSpec(shape=Shape5(16, 16, 1, 2, 1), coil_support=(2, 2, 1), seed=3), spec
        )
        eig = hermitian_eig(gram_matrix(d_full, spec))
        _, perp = split_by_rank(eig, rank)
        bank = filters_from_nullspace(perp, spec)
        scale = np.linalg.norm(d_full)
        for i in range(bank.count):
            resp = nd_convolve(d_full, bank.kernel(i), spec)
            assert np.linalg.norm(resp) <= 1e-8 * scale

    def test_nullspace_eigenvalues_vanish_at_true_rank(self):
        spec = ConvSpec(Shape5(3, 3, 1, 2, 1))
        d_full, rank = generate_phantom(
            PhantomSpec(shape=Shape5(16, 16, 1, 2, 1), coil_support=(2, 2, 1), seed=5), spec
        )
        eig = hermitian_eig(gram_matrix(d_full, spec))
        null_vals = eig.values[: spec.kernel_size - rank]
        assert np.all(null_vals <= 1e-10 * eig.values[-1])

    def test_parseval_over_null_subspace(self, rng):
        # sum_i ||D conv F_i||^2 equals the sum of the null-block eigenvalues
        for _ in range(10):
            data, spec = random_spec(rng, max_extent=6)
            size = spec.kernel_size
            if size < 2:
                continue
            eig = hermitian_eig(gram_matrix(data, spec))
            rank = max(1, size // 3)
            _, perp = split_by_rank(eig, rank)
            bank = filters_from_nullspace(perp, spec)
            total = sum(
                float(np.vdot(r := nd_convolve(data, bank.kernel(i), spec), r).real)
                for i in range(bank.count)
            )
            expected = float(np.sum(eig.values[: size - rank]))
            floor = 1e-12 * float(eig.values[-1]) * max(bank.count, 1)
            assert abs(total - expected) <= 1e-8 * abs(expected) + floor

    def test_length_mismatch(self, rng):
        spec = ConvSpec(Shape5(2, 2, 1, 1, 1))
        with pytest.raises(Exception):
            filters_from_nullspace(np.zeros((3, 1)), spec)
