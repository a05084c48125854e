import numpy as np
import pytest

from cbimoments import InitialLaw, validate
from cbimoments.moments import first_moment
from cbimoments.params import derive
from cbimoments.simulator import (
    SimConfig,
    UnstableStepError,
    estimate_moments,
    simulate_coupled,
    simulate_ensemble,
    simulate_path,
)


def simple(d=1, **over):
    base = {"d": d, "c": [0.0] * d, "beta": [0.0] * d, "B": [[0.0] * d for _ in range(d)],
            "nu": {"atoms": []}, "mu": [{"atoms": []} for _ in range(d)]}
    base.update(over)
    return validate(base)


POISSON = simple(nu={"atoms": [{"z": [1.0], "w": 2.0}]})

TRUNC = simple(
    beta=[0.3],
    nu={"atoms": [{"z": [1.0], "w": 0.5}]},
    mu=[{"atoms": [{"z": [1.0], "w": 0.4}, {"z": [2.0], "w": 0.25}, {"z": [4.0], "w": 0.12}]}],
)


class TestConfig:
    def test_step_must_divide_horizon(self):
        with pytest.raises(ValueError):
            SimConfig(T=1.0, h=0.3, n_paths=10, seed=1, x0=[1.0])

    def test_levels_must_increase_and_exceed_one(self):
        with pytest.raises(ValueError):
            SimConfig(T=1.0, h=0.1, n_paths=10, seed=1, x0=[1.0], K_levels=(3.0, 1.5))
        with pytest.raises(ValueError):
            SimConfig(T=1.0, h=0.1, n_paths=10, seed=1, x0=[1.0], K_levels=(1.0,))

    def test_nonnegative_start(self):
        with pytest.raises(ValueError):
            SimConfig(T=1.0, h=0.1, n_paths=10, seed=1, x0=[-0.5])


class TestSinglePath:
    def test_deterministic_path_tracks_linear_flow(self):
        p = simple(beta=[0.4], B=[[-0.3]])
        cfg = SimConfig(T=1.0, h=1e-3, n_paths=1, seed=7, x0=[2.0])
        path = simulate_path(p, cfg)
        exact = first_moment(derive(p), InitialLaw.deterministic([2.0]), 1.0)[0]
        assert path.values[-1, 0] == pytest.approx(exact, abs=5e-4)  # O(h) Euler
        assert len(path.events) == 0

    def test_reproducible_and_keyed_by_path_index(self):
        cfg = SimConfig(T=1.0, h=1e-2, n_paths=1, seed=11, x0=[1.0])
        a = simulate_path(POISSON, cfg, path_index=123)
        b = simulate_path(POISSON, cfg, path_index=123)
        c = simulate_path(POISSON, cfg, path_index=124)
        assert np.array_equal(a.values, b.values)
        assert [e.time for e in a.events] == [e.time for e in b.events]
        assert not np.array_equal(a.values, c.values) or len(a.events) != len(c.events)

    def test_event_log_reconstructs_pure_jump_path(self):
        cfg = SimConfig(T=1.0, h=1e-2, n_paths=1, seed=3, x0=[1.0])
        path = simulate_path(POISSON, cfg, path_index=5)
        total = 1.0 + sum(e.z[0] for e in path.events if e.accepted[0])
        assert path.values[-1, 0] == pytest.approx(total, rel=1e-12)
        for e in path.events:
            assert 0.0 < e.time <= 1.0
            assert e.kind == "immigration" and e.u is None

    def test_states_stay_nonnegative(self):
        p = simple(c=[0.8], beta=[0.1], B=[[-2.0]])
        cfg = SimConfig(T=2.0, h=1e-2, n_paths=1, seed=2, x0=[0.05])
        path = simulate_path(p, cfg)
        assert np.all(path.values >= 0.0)

    def test_unstable_step_detected(self):
        p = simple(B=[[400.0]])
        cfg = SimConfig(T=1.0, h=0.25, n_paths=1, seed=1, x0=[1.0])
        with pytest.raises(UnstableStepError):
            simulate_path(p, cfg)


class TestCoupling:
    def test_high_cutoff_reproduces_untruncated_stream(self):
        cfg = SimConfig(T=1.0, h=1e-2, n_paths=1, seed=9, x0=[1.0], K_levels=(5.0, np.inf))
        for i in range(20):
            path = simulate_coupled(TRUNC, cfg, path_index=i)
            assert np.array_equal(path.level_values[0], path.level_values[1])

    def test_pathwise_ordering_across_levels(self):
        cfg = SimConfig(T=1.0, h=1e-2, n_paths=300, seed=42, x0=[1.0], K_levels=(1.5, 3.0, np.inf))
        ens = simulate_ensemble(TRUNC, cfg, times=np.linspace(0.1, 1.0, 10))
        s = ens.states
        assert np.all(s[:, 0] <= s[:, 1] + 1e-12)
        assert np.all(s[:, 1] <= s[:, 2] + 1e-12)

    def test_branching_thinning_mark_logged(self):
        cfg = SimConfig(T=1.0, h=1e-2, n_paths=1, seed=8, x0=[2.0], K_levels=(1.5, np.inf))
        for i in range(30):
            path = simulate_coupled(TRUNC, cfg, path_index=i)
            for e in path.events:
                if e.kind == "branching":
                    assert e.type_index == 0 and e.u is not None and e.u >= 0.0
                    if np.linalg.norm(e.z) >= 1.5:
                        assert not e.accepted[0]  # truncated level discards big jumps


class TestEnsemble:
    def test_threads_do_not_change_results(self):
        cfg = SimConfig(T=1.0, h=1e-2, n_paths=800, seed=11, x0=[1.0])
        a = simulate_ensemble(POISSON, cfg)
        b = simulate_ensemble(POISSON, cfg, threads=4)
        assert np.array_equal(a.states, b.states)

    def test_poisson_mean_within_band(self):
        cfg = SimConfig(T=1.0, h=1e-2, n_paths=20000, seed=13, x0=[1.0])
        emp = estimate_moments(simulate_ensemble(POISSON, cfg), 3)
        for k, want in [(1, 3.0), (2, 11.0), (3, 47.0)]:
            est, se = emp.raw[(0, (0,) * k)]
            assert abs(est - want) <= 4.0 * se

    def test_weak_error_independent_of_step_for_pure_jumps(self):
        # exact-event scheme: no h-dependence when c=0 and drift is trivial
        base = SimConfig(T=1.0, h=1e-2, n_paths=20000, seed=17, x0=[1.0])
        half = SimConfig(T=1.0, h=5e-3, n_paths=20000, seed=17, x0=[1.0])
        e1 = estimate_moments(simulate_ensemble(POISSON, base), 1)
        e2 = estimate_moments(simulate_ensemble(POISSON, half), 1)
        m1, se1 = e1.raw[(0, (0,))]
        m2, se2 = e2.raw[(0, (0,))]
        assert abs(m1 - m2) <= 4.0 * np.hypot(se1, se2)

    def test_branching_growth_mean(self):
        p = simple(mu=[{"atoms": [{"z": [2.0], "w": 0.6}]}])
        cfg = SimConfig(T=1.0, h=1e-3, n_paths=20000, seed=3, x0=[1.5])
        emp = estimate_moments(simulate_ensemble(p, cfg), 1)
        est, se = emp.raw[(0, (0,))]
        want = first_moment(derive(p), InitialLaw.deterministic([1.5]), 1.0)[0]
        assert abs(est - want) <= 4.0 * se

    def test_unit_norm_branching_atom_keeps_mean_constant(self):
        # an atom at norm exactly 1 is a big jump: its mean is removed from the
        # SDE drift, so +1 jumps at rate rho*X against drift -rho*X balance and
        # the mean drift matrix is zero
        p = simple(mu=[{"atoms": [{"z": [1.0], "w": 0.8}]}])
        assert derive(p).mean_drift[0, 0] == 0.0
        cfg = SimConfig(T=1.0, h=1e-3, n_paths=20000, seed=29, x0=[1.5])
        emp = estimate_moments(simulate_ensemble(p, cfg), 1)
        est, se = emp.raw[(0, (0,))]
        assert abs(est - 1.5) <= 4.0 * se

    def test_zero_noise_gives_zero_stderr(self):
        p = simple(beta=[0.4], B=[[-0.3]])
        cfg = SimConfig(T=1.0, h=1e-2, n_paths=200, seed=5, x0=[2.0])
        emp = estimate_moments(simulate_ensemble(p, cfg), 2)
        est, se = emp.raw[(0, (0, 0))]
        assert se == pytest.approx(0.0, abs=1e-12)
        cest, cse = emp.central[(0, (0, 0))]
        assert cest == pytest.approx(0.0, abs=1e-24) and cse == pytest.approx(0.0, abs=1e-12)

    def test_symmetric_types_give_symmetric_tensors(self):
        p = simple(
            d=2,
            c=[0.2, 0.2],
            beta=[0.3, 0.3],
            B=[[-0.4, 0.1], [0.1, -0.4]],
            nu={"atoms": [{"z": [1.0, 1.0], "w": 0.5}]},
            mu=[
                {"atoms": [{"z": [1.2, 0.4], "w": 0.3}]},
                {"atoms": [{"z": [0.4, 1.2], "w": 0.3}]},
            ],
        )
        cfg = SimConfig(T=1.0, h=1e-2, n_paths=20000, seed=19, x0=[1.0, 1.0])
        emp = estimate_moments(simulate_ensemble(p, cfg), 2)
        for a, b in [(((0,)), ((1,))), (((0, 0)), ((1, 1)))]:
            ea, sa = emp.raw[(0, tuple(a))]
            eb, sb = emp.raw[(0, tuple(b))]
            assert abs(ea - eb) <= 4.0 * np.hypot(sa, sb)

    def test_minimum_paths_enforced(self):
        cfg = SimConfig(T=1.0, h=1e-1, n_paths=50, seed=1, x0=[1.0])
        with pytest.raises(ValueError):
            estimate_moments(simulate_ensemble(POISSON, cfg), 1)

    def test_ensemble_rows_equal_single_path_streams(self):
        # ensemble path i and simulate_path(path_index=i) consume the same
        # keyed stream, so recorded states agree bit for bit
        cfg = SimConfig(T=1.0, h=1e-2, n_paths=6, seed=31, x0=[1.0], K_levels=(1.5, np.inf))
        ens = simulate_ensemble(TRUNC, cfg, times=[0.25, 1.0])
        for i in range(6):
            path = simulate_path(TRUNC, cfg, path_index=i)
            for l in range(2):
                assert path.level_values[l][25, 0] == ens.states[i, l, 0, 0]
                assert path.level_values[l][100, 0] == ens.states[i, l, 1, 0]

    def test_small_atom_instance_matches_recursion(self):
        # atoms below norm 1 exercise the compensated-small-jump drift; the
        # ensemble must still reproduce the recursion's first two moments
        from cbimoments.moments import raw_trajectory

        p = simple(
            c=[0.2],
            beta=[0.1],
            B=[[-0.1]],
            nu={"atoms": [{"z": [0.7], "w": 0.8}]},
            mu=[{"atoms": [{"z": [0.5], "w": 0.6}, {"z": [1.5], "w": 0.3}]}],
        )
        law = InitialLaw.deterministic([1.0])
        traj = raw_trajectory(p, law, 2, 1.0, 400)
        cfg = SimConfig(T=1.0, h=1e-3, n_paths=40000, seed=37, x0=[1.0])
        emp = estimate_moments(simulate_ensemble(p, cfg), 2)
        for k in (1, 2):
            ref = traj.value(400, k, (0,) * k)
            est, se = emp.raw[(0, (0,) * k)]
            assert abs(est - ref) <= max(4.0 * se, 0.02 * abs(ref)), (k, ref, est, se)

    def test_raw_jackknife_matches_classic_se(self):
        cfg = SimConfig(T=1.0, h=1e-2, n_paths=5000, seed=23, x0=[1.0])
        ens = simulate_ensemble(POISSON, cfg)
        emp = estimate_moments(ens, 1, groups=5000)  # delete-1
        x = ens.states[:, 0, 0, 0]
        est, se = emp.raw[(0, (0,))]
        assert est == pytest.approx(x.mean(), rel=1e-12)
        assert se == pytest.approx(x.std(ddof=1) / np.sqrt(len(x)), rel=1e-6)
