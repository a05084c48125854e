import numpy as np
import pytest

from cbimoments import InitialLaw, validate
from cbimoments.affine import (
    NegativeComponentError,
    default_steps,
    mechanism,
    moment_from_laplace,
    solve_v,
)
from cbimoments.moments import first_moment, raw_trajectory
from cbimoments.params import derive
from conftest import random_instance


def simple(d=1, **over):
    base = {"d": d, "c": [0.0] * d, "beta": [0.0] * d, "B": [[0.0] * d for _ in range(d)],
            "nu": {"atoms": []}, "mu": [{"atoms": []} for _ in range(d)]}
    base.update(over)
    return validate(base)


class TestMechanism:
    def test_vanishes_at_zero(self):
        for seed in range(5):
            p = random_instance(seed)
            mech = mechanism(p)
            assert np.allclose(mech.phi(np.zeros(p.d)), 0.0, atol=1e-14)
            assert mech.psi(np.zeros(p.d)) == 0.0

    def test_psi_nonnegative_on_orthant(self, rng):
        p = random_instance(9)
        mech = mechanism(p)
        for _ in range(50):
            lam = rng.uniform(0.0, 3.0, p.d)
            assert mech.psi(lam) >= -1e-13

    def test_linear_branching_term(self):
        # d=1, c=0, mu empty: phi(lam) = -b lam
        p = simple(B=[[-0.7]])
        mech = mechanism(p)
        assert mech.phi(np.array([2.0]))[0] == pytest.approx(1.4)


class TestSolveV:
    def test_zero_initial_condition_is_fixed_point(self):
        p = random_instance(3)
        sol = solve_v(p, np.zeros(p.d), 2.0)
        assert np.allclose(sol.v, 0.0, atol=1e-14)
        assert sol.psi_integral == pytest.approx(0.0, abs=1e-14)

    def test_linear_case_analytic(self):
        p = simple(B=[[-0.7]])
        sol = solve_v(p, [1.3], 2.0)
        assert sol.v[0] == pytest.approx(1.3 * np.exp(-1.4), rel=1e-10)

    def test_t_zero(self):
        p = random_instance(4)
        lam = np.full(p.d, 0.8)
        sol = solve_v(p, lam, 0.0)
        assert np.array_equal(sol.v, lam) and sol.psi_integral == 0.0

    def test_stays_in_orthant(self, rng):
        for seed in range(5):
            p = random_instance(seed)
            lam = rng.uniform(0.0, 2.0, p.d)
            assert np.all(solve_v(p, lam, 1.5).v >= -1e-9)

    def test_flow_property(self, rng):
        for seed in range(5):
            p = random_instance(seed + 40)
            lam = rng.uniform(0.0, 2.0, p.d)
            direct = solve_v(p, lam, 1.5).v
            hop = solve_v(p, solve_v(p, lam, 0.9).v, 0.6).v
            assert np.max(np.abs(direct - hop)) <= 1e-8

    def test_coarse_steps_flagged(self):
        # one giant RK step overshoots through zero for a stiff quadratic
        p = simple(c=[5.0], B=[[0.0]])
        with pytest.raises(NegativeComponentError):
            solve_v(p, [4.0], 10.0, steps=2)

    def test_default_steps(self):
        assert default_steps(0.5) == 1000
        assert default_steps(3.2) == 3200


class TestMomentFromLaplace:
    def test_deterministic_flow(self):
        p = simple(d=2, beta=[0.3, 0.1], B=[[-0.4, 0.2], [0.1, -0.3]])
        dp = derive(p)
        x0 = np.array([1.0, 0.5])
        want = first_moment(dp, InitialLaw.deterministic(x0), 1.0)
        for j in range(2):
            got = moment_from_laplace(p, x0, 1.0, j, 1)
            assert got == pytest.approx(want[j], rel=1e-7)

    def test_poisson_second_moment(self):
        p = simple(nu={"atoms": [{"z": [1.0], "w": 2.0}]})
        got = moment_from_laplace(p, [1.0], 1.0, 0, 2)
        assert got == pytest.approx(11.0, rel=1e-6)

    def test_t_zero(self):
        p = simple()
        assert moment_from_laplace(p, [1.5], 0.0, 0, 1) == pytest.approx(1.5, rel=1e-9)
        assert moment_from_laplace(p, [1.5], 0.0, 0, 2) == pytest.approx(2.25, rel=1e-6)

    def test_higher_orders_rejected(self):
        p = simple()
        with pytest.raises(ValueError):
            moment_from_laplace(p, [1.0], 1.0, 0, 3)

    @pytest.mark.parametrize("seed", (71, 72, 73))
    def test_agrees_with_recursion(self, seed):
        p = random_instance(seed)
        law = InitialLaw.deterministic(np.full(p.d, 1.0))
        dp = derive(p)
        traj = raw_trajectory(p, law, 2, 1.0, 400)
        for j in range(p.d):
            m1 = first_moment(dp, law, 1.0)[j]
            l1 = moment_from_laplace(p, law.points[0], 1.0, j, 1)
            assert abs(l1 - m1) <= 1e-6 * (1.0 + abs(m1))
            m2 = traj.value(400, 2, (j, j))
            l2 = moment_from_laplace(p, law.points[0], 1.0, j, 2)
            assert abs(l2 - m2) <= 1e-3 * (1.0 + abs(m2))
