import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import nestedrap as nr
from nestedrap.mda import KktCertificate, Violation, adjust, mda, scale_factor, verify_kkt
from nestedrap.oracle import brute_force, dp_solve, projection_check, sample_feasible
from instances import FAMILIES, random_instance


def two_var(mode="integer"):
    return nr.NestedInstance([1, 2], [0, 4], [1, 4], [0, 0], [4, 4], nr.quadratic([1, 1], [0, 0]), mode)


def linear_three():
    return nr.NestedInstance([2, 3], [0, 6], [3, 6], [0] * 3, [3] * 3, nr.linear([3, 1, 2]))


class TestAdjust:
    def test_excess_moves_right(self):
        np.testing.assert_array_equal(adjust([0, 1], [3, 1], [2, 3]), [2, 2])

    def test_already_below(self):
        np.testing.assert_array_equal(adjust([0, 1], [1, 2], [2, 3]), [1, 2])

    def test_excess_spread_in_order(self):
        np.testing.assert_array_equal(adjust([0, 1, 2], [5, 0, 0], [2, 2, 2]), [2, 2, 1])

    def test_reversed_order(self):
        np.testing.assert_array_equal(adjust([2, 1, 0], [0, 0, 5], [2, 2, 2]), [1, 2, 2])

    def test_precondition(self):
        with pytest.raises(nr.AdjustPreconditionError):
            adjust([0, 1], [3, 3], [2, 3])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=1, max_size=8))
    def test_preserves_sum_and_caps(self, pairs):
        x = np.array([p[0] for p in pairs])
        up = np.array([p[1] for p in pairs])
        if x.sum() > up.sum():
            return
        out = adjust(range(len(x)), x, up)
        assert out.sum() == x.sum()
        assert np.all(out <= up)


class TestMda:
    def test_two_variable_root(self):
        sols = mda(two_var())
        np.testing.assert_array_equal(sols.x_bb, [1, 3])

    def test_single_constraint_symmetric(self):
        inst = nr.NestedInstance([2], [4], [4], [0, 0], [4, 4], nr.quadratic([1, 1], [0, 0]))
        np.testing.assert_array_equal(mda(inst).x_bb, [2, 2])

    def test_four_solutions_are_ordered(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            inst = random_instance(rng, "crash")
            sols = mda(inst)
            assert np.all(sols.x_aa <= sols.x_ab + 1e-12) or inst.m == 1
            for key in ("aa", "ab", "ba", "bb"):
                assert sols[key].shape == (inst.n,)

    def test_subtree_range(self):
        inst = nr.NestedInstance([1, 2, 3], [0, 1, 3], [1, 2, 3], [0] * 3, [2] * 3, nr.linear([1, 2, 3]))
        sols = mda(inst, 2, 3)
        assert (sols.start, sols.stop) == (1, 3)
        with pytest.raises(ValueError):
            mda(inst, 3, 2)


class TestSolveInteger:
    def test_two_variable(self):
        res = nr.solve_integer(two_var())
        np.testing.assert_array_equal(res.x, [1, 3])
        assert res.objective_value == 10

    def test_linear(self):
        res = nr.solve_integer(linear_three())
        np.testing.assert_array_equal(res.x, [0, 3, 3])
        assert res.objective_value == 9

    def test_pinned(self):
        inst = nr.NestedInstance([1, 3], [2, 5], [2, 5], [2, 1, 2], [2, 1, 2], nr.fuel([1, 1, 1], [1, 2, 3]))
        np.testing.assert_array_equal(nr.solve_integer(inst).x, [2, 1, 2])

    def test_infeasible(self):
        inst = nr.NestedInstance([2], [9], [9], [0, 0], [4, 4], nr.linear([1, 1]))
        with pytest.raises(nr.Infeasible):
            nr.solve_integer(inst)

    def test_stats(self):
        res = nr.solve_integer(two_var())
        assert res.stats.rap_solves == 12

    @pytest.mark.parametrize("family", FAMILIES)
    def test_matches_dp_oracle(self, family):
        rng = np.random.default_rng(FAMILIES.index(family) + 100)
        for _ in range(200):
            inst = random_instance(rng, family)
            got = nr.solve_integer(inst)
            ref = dp_solve(inst)
            assert nr.check_feasibility(inst, got.x).all_zero
            assert got.objective_value == pytest.approx(ref.objective_value, rel=1e-9, abs=1e-9)

    @settings(max_examples=80, deadline=None)
    @given(st.sampled_from(FAMILIES), st.integers(0, 2 ** 32 - 1))
    def test_matches_dp_oracle_hypothesis(self, family, seed):
        inst = random_instance(np.random.default_rng(seed), family)
        got = nr.solve_integer(inst).objective_value
        assert got == pytest.approx(dp_solve(inst).objective_value, rel=1e-9, abs=1e-9)

    def test_box_feasible_root_respects_boxes(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            inst = random_instance(rng, "quadratic")
            x = nr.solve_integer(inst).x
            assert np.all(x >= inst.c) and np.all(x <= inst.d)


class TestSolveContinuous:
    def test_scale_factor(self):
        assert scale_factor(4, 0.5) == 8
        with pytest.raises(ValueError):
            scale_factor(4, 0)

    def test_crash_symmetric(self):
        inst = nr.NestedInstance([2], [4], [4], [1, 1], [3, 3], nr.crash([1, 1], [1, 1]), "continuous")
        res = nr.solve_continuous(inst, epsilon=1e-3)
        np.testing.assert_allclose(res.x, [2, 2], atol=1e-3)

    def test_quadratic_exact(self):
        res = nr.solve_continuous(two_var("continuous"))
        np.testing.assert_allclose(res.x, [1, 3], atol=1e-12)
        assert isinstance(verify_kkt(two_var("continuous"), res.x), KktCertificate)

    def test_quadratic_feasibility(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            inst = random_instance(rng, "quadratic", mode="continuous")
            res = nr.solve_continuous(inst)
            rep = nr.check_feasibility(inst, res.x)
            assert rep.ok(1e-9)
            assert isinstance(verify_kkt(inst, res.x), KktCertificate)

    def test_single_variable(self):
        inst = nr.NestedInstance([1], [2.5], [2.5], [0], [4], nr.crash([0], [1]), "continuous")
        with pytest.raises(nr.DomainError):
            nr.validate(inst)
        inst = inst.replace(c=np.array([1.0]))
        np.testing.assert_allclose(nr.solve_continuous(inst).x, [2.5])


class TestVerifyKkt:
    def test_perturbed_optimum(self):
        inst = nr.NestedInstance([3], [6], [6], [0] * 3, [6] * 3, nr.quadratic([1, 1, 1], [1, 2, 3]),
                                 "continuous")
        x = nr.solve_continuous(inst).x
        assert isinstance(verify_kkt(inst, x), KktCertificate)
        bad = verify_kkt(inst, x + np.array([0.1, -0.1, 0.0]))
        assert isinstance(bad, Violation) and not bad

    def test_pinned(self):
        inst = nr.NestedInstance([1, 2], [1, 3], [1, 3], [1, 2], [1, 2], nr.quadratic([1, 1], [5, 5]),
                                 "continuous")
        cert = verify_kkt(inst, [1, 2])
        assert isinstance(cert, KktCertificate)

    def test_multipliers_sign(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            inst = random_instance(rng, "quadratic", mode="continuous")
            cert = verify_kkt(inst, nr.solve_continuous(inst).x)
            assert isinstance(cert, KktCertificate)
            assert np.all(cert.kappa >= 0) and np.all(cert.lambda_ >= 0)


class TestOracle:
    def test_two_variable(self):
        res = dp_solve(two_var())
        np.testing.assert_array_equal(res.x, [1, 3])
        assert res.objective_value == 10

    def test_pinned(self):
        inst = nr.NestedInstance([2], [3], [3], [1, 2], [1, 2], nr.linear([4, 5]))
        np.testing.assert_array_equal(dp_solve(inst).x, [1, 2])

    def test_total_above_boxes(self):
        inst = nr.NestedInstance([2], [9], [9], [0, 0], [4, 4], nr.linear([1, 1]))
        with pytest.raises(nr.Infeasible):
            dp_solve(inst)

    def test_agrees_with_enumeration(self):
        rng = np.random.default_rng(21)
        for fam in FAMILIES:
            for _ in range(60):
                inst = random_instance(rng, fam, n_max=4, total_max=8)
                assert dp_solve(inst).objective_value == pytest.approx(
                    brute_force(inst).objective_value, rel=1e-12, abs=1e-12)

    def test_not_worse_than_samples(self):
        rng = np.random.default_rng(22)
        for fam in FAMILIES:
            for _ in range(20):
                inst = random_instance(rng, fam)
                best = dp_solve(inst).objective_value
                Z = sample_feasible(inst, rng, size=1000, integer=True)
                for z in Z[:200]:
                    assert nr.check_feasibility(inst, z).all_zero
                vals = [nr.evaluate(inst.objective, z) for z in Z]
                assert best <= min(vals) + 1e-9


class TestProjectionCheck:
    def simplex(self):
        return nr.NestedInstance([2], [1], [1], [0, 0], [1, 1], nr.linear([0, 0]), "continuous")

    def test_feasible_point_is_own_projection(self):
        assert projection_check(self.simplex(), [0.4, 0.6], [0.4, 0.6], rng=0)

    def test_true_projection(self):
        # shift (1, 0.5) down by 0.25 per coordinate onto x1 + x2 = 1
        assert projection_check(self.simplex(), [1.0, 0.5], [0.75, 0.25], rng=0)

    def test_perturbed_candidate_fails(self):
        verdict = projection_check(self.simplex(), [1.0, 0.5], [0.7, 0.3], rng=0)
        assert not verdict
        assert verdict.witness is not None and verdict.worst > 0
