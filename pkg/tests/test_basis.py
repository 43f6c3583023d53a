"""Basis function identities, layouts, and weight packing."""

import numpy as np
import pytest

from irlpilot.basis import (
    WeightLayout,
    WeightVector,
    extract_matrices,
    grad_sigma_quad,
    pack_weights,
    sigma_delta_row,
    sigma_delta_u_block,
    sigma_quad,
    sigma_r1,
    sigma_r2,
    sym_from_uvec,
    tri_dim,
    uvec,
)


def random_symmetric(rng, n):
    m = rng.standard_normal((n, n))
    return 0.5 * (m + m.T)


def random_spd(rng, n, floor=0.2):
    m = rng.standard_normal((n, n))
    return m @ m.T + floor * np.eye(n)


class TestSigmaQuad:
    def test_unit_vector(self):
        out = sigma_quad(np.eye(12)[0])
        assert out[0] == 1.0 and np.all(out[1:] == 0.0)

    def test_two_unit_vector(self):
        out = sigma_quad(np.eye(12)[0] + np.eye(12)[1])
        expected = np.zeros(78)
        expected[0], expected[1], expected[12] = 1.0, 2.0, 1.0
        assert np.array_equal(out, expected)

    def test_quadratic_form_oracle(self):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            x = rng.standard_normal(12)
            m = random_symmetric(rng, 12)
            assert abs(uvec(m) @ sigma_quad(x) - x @ m @ x) < 1e-12

    def test_distinct_from_uvec_of_outer_product(self):
        x = np.arange(1.0, 13.0)
        assert not np.array_equal(sigma_quad(x), uvec(np.outer(x, x)))
        # they differ exactly by the off-diagonal doubling
        ratio = sigma_quad(x) / uvec(np.outer(x, x))
        assert set(np.round(ratio, 12)) == {1.0, 2.0}

    def test_uvec_round_trip(self):
        rng = np.random.default_rng(3)
        for n in (1, 4, 12):
            m = random_symmetric(rng, n)
            assert np.array_equal(sym_from_uvec(uvec(m), n), m)
            v = rng.standard_normal(tri_dim(n))
            assert np.array_equal(uvec(sym_from_uvec(v, n)), v)


class TestGradSigmaQuad:
    def test_zero_point(self):
        assert np.all(grad_sigma_quad(np.zeros(12)) == 0.0)

    def test_first_row_is_gradient_of_x1_squared(self):
        x = np.arange(1.0, 13.0)
        grad = grad_sigma_quad(x)
        assert grad[0, 0] == 2.0 * x[0]
        assert np.all(grad[0, 1:] == 0.0)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        h = 1e-6
        for _ in range(1000):
            x = rng.standard_normal(12)
            grad = grad_sigma_quad(x)
            j = rng.integers(12)
            dx = np.zeros(12)
            dx[j] = h
            fd = (sigma_quad(x + dx) - sigma_quad(x - dx)) / (2 * h)
            assert np.abs(grad[:, j] - fd).max() < 1e-7

    def test_gradient_identity(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            x = rng.standard_normal(12)
            m = random_symmetric(rng, 12)
            lhs = uvec(m) @ grad_sigma_quad(x)
            assert np.abs(lhs - 2.0 * m @ x).max() < 1e-12


class TestSigmaR:
    def test_r1_unit_vector(self):
        out = sigma_r1(np.array([1.0, 0, 0, 0]))
        assert out[0] == 1.0 and np.all(out[1:] == 0.0)

    def test_r1_example(self):
        out = sigma_r1(np.array([1.0, 2.0, 0.0, 0.0]))
        assert np.array_equal(out, [1, 4, 0, 0, 4, 0, 0, 0, 0, 0])

    def test_r1_quadratic_form_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(1000):
            u = rng.standard_normal(4)
            r = random_symmetric(rng, 4)
            assert abs(uvec(r) @ sigma_r1(u) - u @ r @ u) < 1e-12

    def test_r2_unit_vector_rows(self):
        out = sigma_r2(np.array([1.0, 0, 0, 0]))
        expected = np.zeros((4, 10))
        expected[0, 0] = expected[1, 1] = expected[2, 2] = expected[3, 3] = 1.0
        assert np.array_equal(out, expected)

    def test_r2_identity_action(self):
        u = np.array([1.0, 2.0, 0.0, 0.0])
        assert np.array_equal(sigma_r2(u) @ uvec(np.eye(4)), u)

    def test_r2_matrix_action_oracle(self):
        rng = np.random.default_rng(10)
        for _ in range(1000):
            u = rng.standard_normal(4)
            r = random_spd(rng, 4)
            assert np.abs(sigma_r2(u) @ uvec(r) - r @ u).max() < 1e-12


class TestWeightLayout:
    def test_full_dimensions(self, full_layout):
        assert full_layout.total_dim == 165
        assert len(full_layout.q_indices) == 78
        assert len(full_layout.r_indices) == 9

    def test_sparse_dimensions(self, sparse_layout):
        assert sparse_layout.total_dim == 85
        assert sparse_layout.q_indices == (0, 12, 23, 68)
        assert sparse_layout.r_indices == (4, 7, 9)

    def test_r_indices_never_include_scale_anchor(self):
        with pytest.raises(ValueError):
            WeightLayout(n=12, m=4, q_indices=(0,), r_indices=(0, 1))

    def test_indices_must_increase(self):
        with pytest.raises(ValueError):
            WeightLayout(n=12, m=4, q_indices=(3, 3), r_indices=())


class TestWeightVector:
    @pytest.mark.parametrize("layout_name", ["sparse_layout", "full_layout"])
    def test_pack_extract_round_trip(self, layout_name, request):
        layout = request.getfixturevalue(layout_name)
        rng = np.random.default_rng(11)
        w = WeightVector.from_packed(layout, rng.uniform(-5, 5, layout.total_dim))
        s_hat, q_hat, r_hat = extract_matrices(layout, w)
        again = pack_weights(layout, s_hat, q_hat, r_hat)
        assert np.array_equal(again.packed, w.packed)

    def test_paper_solution_round_trip(self, policy, cost, sparse_layout):
        scale = cost.r_matrix[0, 0]
        w = pack_weights(sparse_layout, policy.riccati.s_matrix,
                         cost.q_matrix, cost.r_matrix / scale)
        s_hat, q_hat, r_hat = extract_matrices(sparse_layout, w)
        assert np.array_equal(s_hat, policy.riccati.s_matrix)
        assert np.array_equal(q_hat, cost.q_matrix)
        assert np.array_equal(r_hat, cost.r_matrix / scale)

    def test_zero_weights_extraction(self, sparse_layout):
        s_hat, q_hat, r_hat = extract_matrices(
            sparse_layout, WeightVector.zeros(sparse_layout))
        assert np.all(s_hat == 0.0) and np.all(q_hat == 0.0)
        assert np.array_equal(r_hat, np.diag([1.0, 0, 0, 0]))

    def test_sparse_never_writes_off_diagonal_q(self, sparse_layout):
        rng = np.random.default_rng(12)
        w = WeightVector.from_packed(sparse_layout,
                                     rng.uniform(-5, 5, sparse_layout.total_dim))
        _, q_hat, r_hat = extract_matrices(sparse_layout, w)
        assert np.array_equal(q_hat, np.diag(np.diag(q_hat)))
        assert np.array_equal(r_hat, np.diag(np.diag(r_hat)))

    def test_r1_is_constant(self, sparse_layout):
        assert WeightVector.zeros(sparse_layout).r1 == 1.0


class TestRegressorRows:
    def test_zero_sample_rows(self, system, sparse_layout, full_layout):
        zero_x, zero_u = np.zeros(12), np.zeros(4)
        for layout in (sparse_layout, full_layout):
            assert np.all(sigma_delta_row(system, layout, zero_x, zero_u) == 0.0)
            assert np.all(sigma_delta_u_block(system, layout, zero_x, zero_u) == 0.0)

    def test_row_widths(self, system, sparse_layout, full_layout):
        x, u = np.ones(12), np.ones(4)
        assert sigma_delta_row(system, full_layout, x, u).shape == (165,)
        assert sigma_delta_row(system, sparse_layout, x, u).shape == (85,)
        assert sigma_delta_u_block(system, full_layout, x, u).shape == (4, 165)
        assert sigma_delta_u_block(system, sparse_layout, x, u).shape == (4, 85)

    @pytest.mark.parametrize("which", ["sparse", "full"])
    def test_hjb_identity_with_true_weights(self, which, system, policy,
                                            true_weights_sparse,
                                            true_weights_full):
        # Along u = -K x the scalar row applied to the true reduced
        # weights reproduces the data entry -u1^2 r1 for ANY state.
        w = true_weights_sparse if which == "sparse" else true_weights_full
        rng = np.random.default_rng(13)
        for _ in range(200):
            x = rng.uniform(-2, 2, 12)
            u = -(policy.k_expert @ x)
            row = sigma_delta_row(system, w.layout, x, u)
            assert abs(row @ w.packed + u[0] ** 2 * w.r1) < 1e-9

    @pytest.mark.parametrize("which", ["sparse", "full"])
    def test_optimal_control_identity_with_true_weights(
            self, which, system, policy, true_weights_sparse, true_weights_full):
        w = true_weights_sparse if which == "sparse" else true_weights_full
        rng = np.random.default_rng(14)
        for _ in range(200):
            x = rng.uniform(-2, 2, 12)
            u = -(policy.k_expert @ x)
            block = sigma_delta_u_block(system, w.layout, x, u)
            target = np.zeros(4)
            target[0] = 2.0 * u[0] * w.r1
            assert np.abs(block @ w.packed + target).max() < 1e-9

    def test_gain_error_identity_random_weights(self, system, policy,
                                                sparse_layout):
        # For any weights with invertible extracted R, the vector block
        # evaluates to 2 R (K_hat - K) x at optimal samples once the
        # pinned r1 column is restored.
        rng = np.random.default_rng(15)
        checked = 0
        while checked < 1000:
            w = WeightVector.from_packed(
                sparse_layout, rng.uniform(-5, 5, sparse_layout.total_dim))
            s_hat, _, r_hat = extract_matrices(sparse_layout, w)
            if np.linalg.cond(r_hat) > 1e6:
                continue
            x = rng.uniform(-2, 2, 12)
            u = -(policy.k_expert @ x)
            block = sigma_delta_u_block(system, sparse_layout, x, u)
            lhs = block @ w.packed + 2.0 * u[0] * w.r1 * np.eye(4)[0]
            k_hat = np.linalg.solve(r_hat, system.b_matrix.T @ s_hat)
            rhs = 2.0 * r_hat @ (k_hat - policy.k_expert) @ x
            assert np.abs(lhs - rhs).max() < 1e-10 * max(1.0, np.abs(rhs).max())
            checked += 1

    def test_hjb_residual_identity_gain_matched_weights(self, system, cost,
                                                        policy, sparse_layout):
        # With S, R consistent with the expert gain, the scalar row (r1
        # term restored) evaluates to the pure HJB quadratic x' M x.
        rng = np.random.default_rng(16)
        scale = cost.r_matrix[0, 0]
        s_hat = policy.riccati.s_matrix / scale
        r_hat = cost.r_matrix / scale
        for _ in range(200):
            q_diag = rng.uniform(-3, 3, 4)
            q_hat = np.zeros((12, 12))
            q_hat[[0, 1, 2, 8], [0, 1, 2, 8]] = q_diag
            w = pack_weights(sparse_layout, s_hat, q_hat, r_hat)
            m_hat = (system.a_matrix.T @ s_hat + s_hat @ system.a_matrix
                     - s_hat @ system.b_matrix @ np.linalg.solve(
                         r_hat, system.b_matrix.T @ s_hat) + q_hat)
            x = rng.uniform(-2, 2, 12)
            u = -(policy.k_expert @ x)
            row = sigma_delta_row(system, sparse_layout, x, u)
            lhs = row @ w.packed + u[0] ** 2 * w.r1
            assert abs(lhs - x @ m_hat @ x) < 1e-10 * max(1.0, abs(x @ m_hat @ x))
