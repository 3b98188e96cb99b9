import numpy as np
import pytest
from scipy.integrate import solve_ivp

from vehopt import lyapunov
from vehopt.model import ControlGains, HarvesterParams, build_closed_loop
from vehopt.sim import (
    RNG_ALGORITHM,
    MismatchedModelError,
    PowerEstimate,
    TooShortTrajectoryError,
    Trajectory,
    derive_seed,
    discretize,
    energy_audit,
    estimate_power,
    simulate,
    write_trajectory_csv,
)


class TestDiscretization:
    def test_transition_matches_scalar_series(self, params, gains):
        # columns of exp(A h) against a high-order Taylor evaluation
        m = build_closed_loop(params, gains)
        h = 0.01
        A_d, _ = discretize(m, h, 1.0)
        T = np.eye(5)
        term = np.eye(5)
        for k in range(1, 40):
            term = term @ (m.A * h) / k
            T = T + term
        assert np.allclose(A_d, T, rtol=1e-12, atol=1e-16)

    def test_step_covariance_small_step_expansion(self, params, gains):
        # Q_d = Qc h + (A Qc + Qc A^T) h^2/2 + O(h^3)
        m = build_closed_loop(params, gains)
        h = 1e-5
        Qc = m.B_xi @ m.B_xi.T
        _, Q_d = discretize(m, h, 1.0)
        expected = Qc * h + (m.A @ Qc + Qc @ m.A.T) * h**2 / 2.0
        assert np.allclose(Q_d, expected, atol=1e-13)

    def test_stationary_covariance_is_discrete_fixed_point(self, params, gains):
        # exactness of the sampling: P = A_d P A_d^T + Q_d for any step size
        m = build_closed_loop(params, gains)
        P = lyapunov.solve_stationary_covariance(m.A, m.B_xi @ m.B_xi.T).P
        for h in (0.01, 0.37, 2.0):
            A_d, Q_d = discretize(m, h, 1.0)
            assert np.allclose(P, A_d @ P @ A_d.T + Q_d, atol=1e-12)

    def test_rejects_nonpositive_step(self, params, gains):
        m = build_closed_loop(params, gains)
        with pytest.raises(ValueError):
            discretize(m, 0.0, 1.0)


class TestSimulate:
    def test_determinism(self, params, gains):
        m = build_closed_loop(params, gains)
        a = simulate(m, 1.0, h=0.01, n_steps=500, seed=7)
        b = simulate(m, 1.0, h=0.01, n_steps=500, seed=7)
        assert np.array_equal(a.states, b.states)

    def test_different_seeds_differ(self, params, gains):
        m = build_closed_loop(params, gains)
        a = simulate(m, 1.0, h=0.01, n_steps=500, seed=7)
        b = simulate(m, 1.0, h=0.01, n_steps=500, seed=8)
        assert not np.array_equal(a.states, b.states)

    def test_starts_from_rest(self, params, gains):
        m = build_closed_loop(params, gains)
        t = simulate(m, 1.0, h=0.01, n_steps=10, seed=0)
        assert np.array_equal(t.states[0], np.zeros(5))
        assert t.states.shape == (11, 5)

    def test_zero_intensity_stays_at_rest(self, params, gains):
        m = build_closed_loop(params, gains)
        t = simulate(m, 0.0, h=0.01, n_steps=100, seed=0)
        assert np.array_equal(t.states, np.zeros((101, 5)))

    def test_euler_scheme_statistically_consistent(self):
        # heavy damping so the run covers many correlation times; the Euler
        # estimate must sit within its own confidence band of the exact value
        fast = HarvesterParams(zeta_s=0.5, lam=1.0, zeta_h=0.5, kappa=0.6,
                               alpha=10.0, W=1.0)
        g = ControlGains(1.0, 0.0)
        m = build_closed_loop(fast, g)
        j_ref = lyapunov.mean_power(m, 1.0)
        t = simulate(m, 1.0, h=0.002, n_steps=1_000_000, seed=3,
                     scheme="euler_maruyama")
        est = estimate_power(t)
        assert abs(est.mean - j_ref) <= 3.0 * est.std_error + 0.01 * j_ref

    def test_rejects_unknown_scheme(self, params, gains):
        m = build_closed_loop(params, gains)
        with pytest.raises(ValueError):
            simulate(m, 1.0, h=0.01, n_steps=10, seed=0, scheme="heun")

    def test_derive_seed_is_deterministic_and_spread(self):
        seeds = [derive_seed(1234, i) for i in range(20)]
        assert seeds == [derive_seed(1234, i) for i in range(20)]
        assert len(set(seeds)) == 20


class TestPowerEstimate:
    def test_constant_voltage_trajectory(self):
        states = np.zeros((3200, 5))
        states[:, 4] = 2.0
        t = Trajectory(step=0.01, states=states, seed=0, scheme="exact")
        est = estimate_power(t, burn_in=0.0)
        assert est == PowerEstimate(mean=4.0, std_error=0.0, burn_in_steps=0)

    def test_burn_in_discards_prefix(self):
        states = np.zeros((1000, 5))
        states[500:, 4] = 1.0
        t = Trajectory(step=0.01, states=states, seed=0, scheme="exact")
        assert estimate_power(t, burn_in=0.5).mean == 1.0

    def test_too_short_trajectory_raises(self):
        t = Trajectory(step=0.01, states=np.zeros((10, 5)), seed=0,
                       scheme="exact")
        with pytest.raises(TooShortTrajectoryError):
            estimate_power(t, burn_in=0.0)

    def test_burn_in_range_enforced(self):
        t = Trajectory(step=0.01, states=np.zeros((100, 5)), seed=0,
                       scheme="exact")
        with pytest.raises(ValueError):
            estimate_power(t, burn_in=0.95)

    def test_long_run_consistent_with_covariance(self, params, gains):
        m = build_closed_loop(params, gains)
        j_ref = lyapunov.mean_power(m, 1.0)
        t = simulate(m, 1.0, h=0.01, n_steps=400_000, seed=42)
        est = estimate_power(t)
        assert abs(est.mean - j_ref) <= 3.0 * est.std_error


class TestEnergyAudit:
    @staticmethod
    def _smooth_trajectory(params, gains, h, t_final=30.0):
        # deterministic relaxation from a nonzero state: smooth path, so the
        # trapezoidal audit residual must shrink at second order in h
        m = build_closed_loop(params, gains)
        x0 = np.array([0.5, 0.0, -0.3, 0.2, 0.1])
        times = np.arange(int(round(t_final / h)) + 1) * h
        sol = solve_ivp(lambda _, x: m.A @ x, (0.0, times[-1]), x0,
                        t_eval=times, rtol=1e-12, atol=1e-14, method="DOP853")
        return Trajectory(step=h, states=sol.y.T, seed=0, scheme="exact",
                          model=m)

    def test_residuals_shrink_at_second_order(self, params):
        g = ControlGains(0.1, 900.0)
        audits = [energy_audit(self._smooth_trajectory(params, g, h), params, g)
                  for h in (0.02, 0.01)]
        mech_order = np.log2(audits[0].mech_residual / audits[1].mech_residual)
        elec_order = np.log2(audits[0].elec_residual / audits[1].elec_residual)
        assert mech_order >= 1.9
        assert elec_order >= 1.9

    def test_gain_mismatch_is_rejected(self, params):
        g = ControlGains(0.1, 900.0)
        t = self._smooth_trajectory(params, g, 0.02)
        with pytest.raises(MismatchedModelError):
            energy_audit(t, params, ControlGains(0.2, 900.0))

    def test_missing_model_is_rejected(self, params):
        g = ControlGains(0.1, 900.0)
        t = Trajectory(step=0.01, states=np.zeros((50, 5)), seed=0,
                       scheme="exact")
        with pytest.raises(MismatchedModelError):
            energy_audit(t, params, g)

    def test_zero_trajectory_reports_zero_residuals(self, params):
        g = ControlGains(0.1, 900.0)
        m = build_closed_loop(params, g)
        t = Trajectory(step=0.01, states=np.zeros((50, 5)), seed=0,
                       scheme="exact", model=m)
        audit = energy_audit(t, params, g)
        assert audit.mech_residual == 0.0 and audit.elec_residual == 0.0


class TestTrajectoryCsv:
    def test_roundtrip_and_metadata(self, params, gains, tmp_path):
        m = build_closed_loop(params, gains)
        t = simulate(m, 1.0, h=0.01, n_steps=50, seed=11)
        path = tmp_path / "trajectory.csv"
        write_trajectory_csv(t, path, params)
        text = path.read_text()
        assert "# seed=11" in text
        assert f"# rng={RNG_ALGORITHM}" in text
        assert "# gains K_m=0.1 K_e=900.0" in text
        data = np.genfromtxt(path, delimiter=",", skip_header=7)
        assert data.shape == (51, 6)
        assert np.array_equal(data[:, 1:], t.states)
        assert np.allclose(data[:, 0], np.arange(51) * 0.01)
