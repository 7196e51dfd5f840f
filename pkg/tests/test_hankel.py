import numpy as np
import pytest

from convframe import (
    CIRCULAR,
    ConvSpec,
    HankelOperator,
    HankelSizeCapError,
    Shape5,
    ShapeMismatchError,
    explicit_hankel,
    gram_matrix,
    hankel_matrix_shape,
    hankel_matvec,
    hankel_nbytes,
    hankel_rmatvec,
    nd_convolve,
    vec,
)
from conftest import brute_hankel, random_kernel, random_spec


def data_1234():
    return np.array([1, 2, 3, 4], dtype=np.complex128).reshape(4, 1, 1, 1, 1)


SPEC_1D2 = ConvSpec(Shape5(2, 1, 1, 1, 1))


class TestExplicitHankel:
    def test_reference_1d(self):
        h = explicit_hankel(HankelOperator(data_1234(), SPEC_1D2))
        np.testing.assert_array_equal(h, np.array([[2, 1], [3, 2], [4, 3]], dtype=complex))

    def test_kernel_spanning_data_gives_single_row(self):
        spec = ConvSpec(Shape5(4, 1, 1, 1, 1))
        h = explicit_hankel(HankelOperator(data_1234(), spec))
        assert h.shape == (1, 4)
        np.testing.assert_array_equal(h[0], [4, 3, 2, 1])

    def test_circular_has_wraparound_rows(self):
        spec = ConvSpec(Shape5(2, 1, 1, 1, 1), (CIRCULAR, "valid", "valid", "valid", "valid"))
        h = explicit_hankel(HankelOperator(data_1234(), spec))
        assert h.shape == (4, 2)
        np.testing.assert_array_equal(h, np.array([[2, 1], [3, 2], [4, 3], [1, 4]], dtype=complex))

    def test_matches_bruteforce_definition(self, rng):
        for _ in range(20):
            data, spec = random_spec(rng, max_extent=6)
            h = explicit_hankel(HankelOperator(data, spec))
            np.testing.assert_allclose(h, brute_hankel(data, spec), atol=1e-14)

    def test_size_cap_enforced(self, rng):
        data = rng.standard_normal((40, 40, 1, 2, 1)) + 0j
        spec = ConvSpec(Shape5(5, 5, 1, 2, 1))
        with pytest.raises(HankelSizeCapError):
            explicit_hankel(HankelOperator(data, spec), entry_cap=1000)


class TestMatvec:
    def test_1d_kernel_product(self):
        op = HankelOperator(data_1234(), SPEC_1D2)
        np.testing.assert_allclose(hankel_matvec(op, np.array([1, 0], complex)), [2, 3, 4])

    def test_zero_vector(self):
        op = HankelOperator(data_1234(), SPEC_1D2)
        assert not hankel_matvec(op, np.zeros(2)).any()

    def test_equals_convolution_and_explicit_matrix(self, rng):
        for _ in range(30):
            data, spec = random_spec(rng, max_extent=6)
            op = HankelOperator(data, spec)
            a = rng.standard_normal(spec.kernel_size) + 1j * rng.standard_normal(spec.kernel_size)
            mv = hankel_matvec(op, a)
            conv = vec(nd_convolve(data, a.reshape(tuple(spec.kernel_shape), order="F"), spec))
            ref = explicit_hankel(op) @ a
            np.testing.assert_allclose(mv, conv, rtol=1e-12, atol=1e-14)
            assert np.linalg.norm(mv - ref) <= 1e-12 * max(np.linalg.norm(ref), 1e-30)

    def test_length_mismatch(self):
        op = HankelOperator(data_1234(), SPEC_1D2)
        with pytest.raises(ShapeMismatchError):
            hankel_matvec(op, np.zeros(3))


class TestRmatvec:
    def test_zero_vector(self):
        op = HankelOperator(data_1234(), SPEC_1D2)
        assert not hankel_rmatvec(op, np.zeros(3)).any()

    def test_explicit_example(self):
        op = HankelOperator(data_1234(), SPEC_1D2)
        y = np.array([1.0, 2.0, -1.0], dtype=complex)
        h = np.array([[2, 1], [3, 2], [4, 3]], dtype=complex)
        np.testing.assert_allclose(hankel_rmatvec(op, y), h.conj().T @ y, atol=1e-14)

    def test_adjoint_identity_random(self, rng):
        for _ in range(30):
            data, spec = random_spec(rng, max_extent=6)
            op = HankelOperator(data, spec)
            rows, cols = op.shape
            a = rng.standard_normal(cols) + 1j * rng.standard_normal(cols)
            y = rng.standard_normal(rows) + 1j * rng.standard_normal(rows)
            lhs = np.vdot(hankel_matvec(op, a), y)
            rhs = np.vdot(a, hankel_rmatvec(op, y))
            assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1e-30)

    def test_length_mismatch(self):
        op = HankelOperator(data_1234(), SPEC_1D2)
        with pytest.raises(ShapeMismatchError):
            hankel_rmatvec(op, np.zeros(5))


class TestGram:
    def test_reference_1d(self):
        np.testing.assert_allclose(
            gram_matrix(data_1234(), SPEC_1D2), np.array([[29, 20], [20, 14]], dtype=complex)
        )

    def test_zero_data(self):
        g = gram_matrix(np.zeros((4, 1, 1, 1, 1), complex), SPEC_1D2)
        assert not g.any()

    def test_documented_random_instance(self, rng):
        data = rng.standard_normal((6, 5, 1, 2, 1)) + 1j * rng.standard_normal((6, 5, 1, 2, 1))
        spec = ConvSpec(Shape5(3, 3, 1, 2, 1))
        g = gram_matrix(data, spec)
        h = explicit_hankel(HankelOperator(data, spec))
        ref = h.conj().T @ h
        assert np.linalg.norm(g - ref) / np.linalg.norm(ref) <= 1e-12

    def test_matches_explicit_many_random_instances(self, rng):
        # >= 50 instances, Hermitian and PSD invariants included
        for _ in range(50):
            data, spec = random_spec(rng, max_extent=6)
            g = gram_matrix(data, spec)
            h = explicit_hankel(HankelOperator(data, spec))
            ref = h.conj().T @ h
            denom = max(np.linalg.norm(ref), 1e-30)
            assert np.linalg.norm(g - ref) / denom <= 1e-12
            assert np.linalg.norm(g - g.conj().T) <= 1e-12 * denom
            w = np.linalg.eigvalsh(g)
            assert w[0] >= -1e-10 * max(w[-1], 1e-30)

    def test_blocked_assembly_independent_of_budget(self, rng):
        data, spec = random_spec(rng, max_extent=6)
        g1 = gram_matrix(data, spec, budget_bytes=1)          # single-column blocks
        g2 = gram_matrix(data, spec, budget_bytes=1 << 30)    # one big block
        np.testing.assert_allclose(g1, g2, rtol=1e-13, atol=1e-14)


class TestSizeHelpers:
    def test_matrix_shape(self):
        spec = ConvSpec(Shape5(5, 5, 1, 4, 1))
        assert hankel_matrix_shape((64, 64, 1, 4, 1), spec) == (60 * 60, 100)

    def test_nbytes(self):
        spec = ConvSpec(Shape5(5, 5, 1, 4, 1))
        assert hankel_nbytes((64, 64, 1, 4, 1), spec) == 60 * 60 * 100 * 16
