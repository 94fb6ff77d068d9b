"""Sparsemax against the sort-and-threshold oracle plus simplex properties."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from severitas import autodiff as ad

from helpers import central_diff_check, sparsemax_oracle


def project(z):
    return ad.sparsemax(ad.Tensor(np.asarray(z, dtype=np.float64))).data


class TestExamples:
    def test_constant_vector_uniform(self):
        for c in (-3.0, 0.0, 2.5):
            np.testing.assert_allclose(project([c, c, c]), [1 / 3] * 3, atol=1e-15)

    def test_two_zero(self):
        np.testing.assert_allclose(project([2.0, 0.0]), [1.0, 0.0], atol=1e-15)

    def test_half_zero(self):
        np.testing.assert_allclose(project([0.5, 0.0]), [0.75, 0.25], atol=1e-15)

    def test_empty_vector_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            ad.sparsemax(ad.Tensor(np.zeros((3, 0))))

    def test_batched_last_axis(self):
        z = np.array([[[2.0, 0.0], [0.5, 0.0]], [[1.0, 1.0], [-5.0, 0.0]]])
        p = ad.sparsemax(ad.Tensor(z)).data
        np.testing.assert_allclose(p[0, 0], [1.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(p[0, 1], [0.75, 0.25], atol=1e-15)
        np.testing.assert_allclose(p[1, 0], [0.5, 0.5], atol=1e-15)
        np.testing.assert_allclose(p[1, 1], [0.0, 1.0], atol=1e-15)


class TestOracleAgreement:
    @pytest.mark.parametrize("seed", range(200))
    def test_random_vectors(self, seed):
        rng = np.random.default_rng(seed)
        dim = int(rng.integers(2, 17))
        z = rng.normal(scale=rng.uniform(0.1, 5.0), size=dim)
        p = project(z)
        np.testing.assert_allclose(p, sparsemax_oracle(z), atol=1e-12)
        assert p.min() >= 0.0
        assert abs(p.sum() - 1.0) <= 1e-12

    def test_projection_optimality(self):
        # p must be closer to z than any other simplex point
        rng = np.random.default_rng(99)
        for _ in range(200):
            z = rng.normal(size=6) * 3
            p = project(z)
            w = rng.dirichlet(np.ones(6))
            assert ((z - p) ** 2).sum() <= ((z - w) ** 2).sum() + 1e-12


class TestProperties:
    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=16), st.floats(-20, 20))
    def test_shift_invariance(self, values, shift):
        z = np.asarray(values)
        np.testing.assert_allclose(project(z + shift), project(z), atol=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=16))
    def test_simplex_membership(self, values):
        p = project(np.asarray(values))
        assert p.min() >= 0.0
        assert abs(p.sum() - 1.0) <= 1e-12

    def test_exact_zeros_appear(self):
        rng = np.random.default_rng(5)
        sparse = 0
        for _ in range(100):
            p = project(rng.normal(size=8) * 2)
            sparse += int((p == 0.0).any())
        assert sparse >= 80  # well-spread scores almost always drop fields exactly


class TestGradient:
    @pytest.mark.parametrize("seed", range(100))
    def test_support_jacobian_matches_fd(self, seed):
        rng = np.random.default_rng(7000 + seed)
        arrays = {"z": rng.normal(size=(3, 5)) * 2.0}
        target = rng.normal(size=(3, 5))

        def build(tape=None):
            t = ad.Tensor(arrays["z"]) if tape is None else tape.leaf(arrays["z"], "z")
            p = ad.sparsemax(t)
            diff = ad.sub(p, ad.Tensor(target))
            return ad.mean(ad.mul(diff, diff))

        tape = ad.GradTape()
        grads = ad.backward(tape, build(tape))
        central_diff_check(lambda: float(build().data), arrays, {"z": grads[tape.leaf_ids()[0]]})
