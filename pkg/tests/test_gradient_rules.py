import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gemkit import gradient_rules as gr
from gemkit.errors import InvalidEpsilon, ZeroGradient, ZeroUpdateWarning

from oracles import active_set_qp_oracle, soft_margin_kkt_oracle, violating_pair


def unit_vectors(min_dim=2, max_dim=16):
    """Random nonzero vectors with well-behaved component magnitudes.

    Components are zero or in +-[1e-3, 10], keeping every intermediate
    product far from the subnormal range so power-of-two rescalings
    stay exact.
    """
    component = st.one_of(
        st.just(0.0),
        st.floats(1e-3, 10.0),
        st.floats(1e-3, 10.0).map(lambda x: -x),
    )
    return st.integers(min_dim, max_dim).flatmap(
        lambda d: st.lists(component, min_size=d, max_size=d)
    ).map(np.array).filter(lambda v: np.linalg.norm(v) > 1e-6)


class TestNormalize:
    def test_pythagorean_triple(self):
        np.testing.assert_allclose(gr.normalize([3.0, 4.0]), [0.6, 0.8], rtol=0, atol=1e-15)

    def test_zero_vector_rejected(self):
        with pytest.raises(ZeroGradient):
            gr.normalize([0.0, 0.0])

    def test_axis_vector(self):
        np.testing.assert_array_equal(gr.normalize([5.0, 0.0, 0.0]), [1.0, 0.0, 0.0])

    @given(unit_vectors())
    def test_unit_norm_and_direction(self, v):
        unit = gr.normalize(v)
        assert abs(np.linalg.norm(unit) - 1.0) < 1e-12
        assert unit @ v > 0


class TestViolationCheck:
    def test_orthogonal_is_not_a_violation(self):
        assert gr.violation_check([1.0, 0.0], [0.0, 1.0]) is False

    def test_negative_dot_is_a_violation(self):
        assert gr.violation_check([1.0, -1.0], [0.0, 1.0]) is True

    def test_parallel_is_not_a_violation(self):
        assert gr.violation_check([2.0, 0.0], [1.0, 0.0]) is False

    def test_degenerate_inputs_rejected(self):
        with pytest.raises(ZeroGradient):
            gr.violation_check([0.0, 0.0], [1.0, 0.0])
        with pytest.raises(ZeroGradient):
            gr.violation_check([1.0, 0.0], [0.0, 0.0])

    @given(unit_vectors())
    def test_normalization_invariant(self, v):
        ref = np.roll(v, 1) + 0.5
        if np.linalg.norm(ref) <= 1e-6:
            return
        assert gr.violation_check(v, ref) == gr.violation_check(4.0 * v, 0.25 * ref)


class TestAgemProject:
    def test_hand_projection(self):
        np.testing.assert_allclose(gr.agem_project([1.0, -1.0], [0.0, 1.0]), [1.0, 0.0], atol=1e-15)

    def test_no_violation_passthrough_is_bitwise(self):
        g = np.array([1.0, 0.0])
        out = gr.agem_project(g, [0.0, 1.0])
        assert out is g

    def test_fully_opposed_projects_to_zero(self):
        np.testing.assert_array_equal(gr.agem_project([0.0, -2.0], [0.0, 1.0]), [0.0, 0.0])

    def test_degenerate_reference_rejected(self):
        with pytest.raises(ZeroGradient):
            gr.agem_project([1.0, 0.0], [0.0, 0.0])

    def test_orthogonality_after_projection(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            g, r = violating_pair(rng, int(rng.integers(2, 65)))
            out = gr.agem_project(g, r)
            assert abs(out @ r) < 1e-10 * np.linalg.norm(g) * np.linalg.norm(r)

    @given(unit_vectors(), st.sampled_from([0.25, 0.5, 2.0, 4.0, 8.0]))
    def test_scale_equivariance_exact_for_powers_of_two(self, g, c):
        ref = -g + np.roll(g, 1) * 0.5
        if np.linalg.norm(ref) <= 1e-6:
            return
        np.testing.assert_array_equal(gr.agem_project(c * g, ref), c * gr.agem_project(g, ref))

    def test_matches_qp_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            g, r = violating_pair(rng, 3)
            want = active_set_qp_oracle(g, [r])
            np.testing.assert_allclose(gr.agem_project(g, r), want, atol=1e-9)


class TestSoftGemUpdate:
    def test_hand_example_opposed(self):
        out = gr.soft_gem_update([0.0, -1.0], [0.0, 2.0], 0.5)
        np.testing.assert_allclose(out, [0.0, 0.5], atol=1e-15)

    def test_hand_example_margin(self):
        out = gr.soft_gem_update([0.6, -0.8], [0.0, 1.0], 0.2)
        np.testing.assert_allclose(out, [0.6, 0.2], atol=1e-15)

    def test_no_violation_passthrough(self):
        g = np.array([1.0, 0.0])
        out = gr.soft_gem_update(g, [1.0, 1.0], 0.3)
        assert out is g

    def test_epsilon_zero_dispatches_to_unnormalized_projection(self):
        g, r = np.array([3.0, -5.0]), np.array([0.0, 7.0])
        np.testing.assert_array_equal(gr.soft_gem_update(g, r, 0.0), gr.agem_project(g, r))

    @pytest.mark.parametrize("eps", [-0.1, 1.5, 2.0])
    def test_epsilon_out_of_range(self, eps):
        with pytest.raises(InvalidEpsilon):
            gr.soft_gem_update([1.0, -1.0], [0.0, 1.0], eps)

    def test_degenerate_inputs_rejected(self):
        with pytest.raises(ZeroGradient):
            gr.soft_gem_update([0.0, 0.0], [0.0, 1.0], 0.5)
        with pytest.raises(ZeroGradient):
            gr.soft_gem_update([1.0, -1.0], [0.0, 0.0], 0.5)

    def test_margin_hit_exactly(self):
        rng = np.random.default_rng(11)
        for eps in (0.1, 0.25, 0.5, 0.9, 1.0):
            for _ in range(100):
                g, r = violating_pair(rng, int(rng.integers(2, 33)))
                out = gr.soft_gem_update(g, r, eps)
                assert abs(out @ gr.normalize(r) - eps) < 1e-8

    def test_matches_kkt_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(300):
            g, r = violating_pair(rng, int(rng.integers(2, 33)))
            eps = float(rng.uniform(0.01, 1.0))
            want = soft_margin_kkt_oracle(g, r, eps)
            got = gr.soft_gem_update(g, r, eps)
            assert np.max(np.abs(got - want)) < 1e-6

    @given(unit_vectors(), st.sampled_from([0.25, 0.5, 2.0, 4.0]), st.sampled_from([0.1, 0.5, 0.9]))
    def test_invariant_to_rescaling_both_inputs(self, g, c, eps):
        ref = -g + 0.25 * np.roll(g, 1)
        if np.linalg.norm(ref) <= 1e-6:
            return
        np.testing.assert_array_equal(
            gr.soft_gem_update(c * g, c * ref, eps), gr.soft_gem_update(g, ref, eps)
        )


class TestAagemUpdate:
    def test_hand_average(self):
        out = gr.aagem_update([1.0, -2.0], [0.0, 5.0])
        np.testing.assert_allclose(out, [0.22360679774997896, 0.052786404500042065], atol=1e-15)

    def test_orthogonal_passthrough(self):
        g = np.array([2.0, 0.0])
        assert gr.aagem_update(g, [0.0, 3.0]) is g

    def test_opposed_vectors_warn_and_return_zero(self):
        with pytest.warns(ZeroUpdateWarning):
            out = gr.aagem_update([0.0, -1.0], [0.0, 1.0])
        np.testing.assert_array_equal(out, [0.0, 0.0])

    def test_degenerate_inputs_rejected(self):
        with pytest.raises(ZeroGradient):
            gr.aagem_update([0.0, 0.0], [0.0, 1.0])

    def test_result_never_conflicts_with_reference(self):
        rng = np.random.default_rng(17)
        for _ in range(300):
            g, r = violating_pair(rng, int(rng.integers(2, 65)))
            out = gr.aagem_update(g, r)
            unit_ref = gr.normalize(r)
            dot = out @ unit_ref
            assert dot >= -1e-12
            expected = (gr.normalize(g) @ unit_ref + 1.0) / 2.0
            assert abs(dot - expected) < 1e-12

    @given(unit_vectors(), st.sampled_from([0.25, 0.5, 2.0, 4.0]))
    def test_invariant_to_rescaling_both_inputs(self, g, c):
        ref = -g + 0.25 * np.roll(g, 1)
        if np.linalg.norm(ref) <= 1e-6:
            return
        np.testing.assert_array_equal(gr.aagem_update(c * g, c * ref), gr.aagem_update(g, ref))


class TestGemProject:
    def test_single_constraint_reduces_to_single_projection(self):
        np.testing.assert_allclose(gr.gem_project([1.0, -1.0], [[0.0, 1.0]]), [1.0, 0.0], atol=1e-8)

    def test_quadrant_projection_to_origin(self):
        out = gr.gem_project([-1.0, -1.0], [[1.0, 0.0], [0.0, 1.0]])
        np.testing.assert_allclose(out, [0.0, 0.0], atol=1e-5)

    def test_feasible_passthrough_is_bitwise(self):
        g = np.array([1.0, 1.0])
        assert gr.gem_project(g, [[1.0, 0.0], [0.0, 1.0]]) is g

    def test_zero_constraints_are_dropped(self):
        g = np.array([1.0, -1.0])
        out = gr.gem_project(g, [[0.0, 0.0], [0.0, 1.0]])
        np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-8)

    def test_single_constraint_matches_single_projection_randomly(self):
        rng = np.random.default_rng(23)
        for _ in range(200):
            g, r = violating_pair(rng, int(rng.integers(2, 65)))
            np.testing.assert_allclose(
                gr.gem_project(g, [r]), gr.agem_project(g, r), atol=1e-6
            )

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(29)
        for _ in range(300):
            dim = int(rng.integers(2, 4))
            count = int(rng.integers(1, 4))
            g = rng.normal(size=dim)
            rows = rng.normal(size=(count, dim))
            want = active_set_qp_oracle(g, rows)
            got = gr.gem_project(g, rows)
            assert np.max(np.abs(got - want)) < 1e-5

    def test_feasibility_with_many_constraints(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            g = rng.normal(size=64)
            rows = rng.normal(size=(int(rng.integers(2, 20)), 64))
            out = gr.gem_project(g, rows)
            units = rows / np.linalg.norm(rows, axis=1, keepdims=True)
            assert np.min(units @ out) >= -1e-8 * max(1.0, np.linalg.norm(g))


@settings(max_examples=60)
@given(unit_vectors())
def test_all_rules_passthrough_without_violation(g):
    ref = np.abs(g) + 0.1  # dot(g, |g|+0.1) can still be negative; force alignment
    if g @ ref < 0:
        ref = g.copy()
    assert gr.agem_project(g, ref) is g
    assert gr.soft_gem_update(g, ref, 0.5) is g
    assert gr.aagem_update(g, ref) is g
    assert gr.gem_project(g, [ref]) is g
