import json

import numpy as np
import pytest

from vehopt import lyapunov, optimize
from vehopt.model import ControlGains, build_closed_loop


class TestSweep:
    def test_lyapunov_cells_match_direct_evaluation(self, params):
        km = [0.1, 0.5]
        ke = [10.0, 900.0]
        result = optimize.sweep(params, km, ke)
        for i, km_i in enumerate(km):
            for j, ke_j in enumerate(ke):
                m = build_closed_loop(params, ControlGains(km_i, ke_j))
                assert result.J[i, j] == pytest.approx(
                    lyapunov.mean_power(m, params.W), rel=1e-14)
        assert not result.any_failed

    def test_infeasible_cells_marked_nan_and_recorded(self, params):
        result = optimize.sweep(params, [0.1], [-2.0, 900.0])
        assert np.isnan(result.J[0, 0])
        assert result.failures == ((0, 0),)
        assert np.isfinite(result.J[0, 1])

    def test_argmax_ignores_failed_cells(self, params):
        result = optimize.sweep(params, [0.1], [-2.0, 10.0, 900.0])
        i, j = result.argmax()
        assert (i, j) == (0, np.nanargmax(result.J[0]))

    def test_single_cell_grid(self, params):
        result = optimize.sweep(params, [0.3], [925.0])
        assert result.argmax() == (0, 0)
        assert result.J.shape == (1, 1)

    def test_rejects_empty_grid(self, params):
        with pytest.raises(ValueError):
            optimize.sweep(params, [], [900.0])

    def test_rejects_unknown_method(self, params):
        with pytest.raises(ValueError):
            optimize.sweep(params, [0.1], [900.0], method="magic")

    def test_spectral_and_lyapunov_methods_agree(self, params):
        a = optimize.sweep(params, [0.1, 0.3], [900.0], method="lyapunov")
        b = optimize.sweep(params, [0.1, 0.3], [900.0], method="spectral")
        assert np.allclose(a.J, b.J, rtol=1e-6)

    def test_default_grids(self):
        ke = optimize.default_ke_grid()
        km = optimize.default_km_grid()
        assert ke[0] == 1.0 and ke[-1] == 1e4 and ke.size == 200
        assert km[0] > 0.0 and km[-1] == 50.0 and km.size == 200


class TestMaximizeGains:
    def test_power_scales_do_not_move_the_argmax(self, params):
        # J is linear in W, so the optimal gains are W-independent
        init = ControlGains(0.3, 925.0)
        opts = optimize.OptimizerOptions(multi_start=False)
        r1 = optimize.maximize_gains(params, init, opts)
        scaled = type(params)(zeta_s=params.zeta_s, lam=params.lam,
                              zeta_h=params.zeta_h, kappa=params.kappa,
                              alpha=params.alpha, W=4.0)
        r2 = optimize.maximize_gains(scaled, init, opts)
        assert r2.gains_star.K_m == pytest.approx(r1.gains_star.K_m, rel=1e-4)
        assert 1.0 + r2.gains_star.K_e == pytest.approx(
            1.0 + r1.gains_star.K_e, rel=1e-4)
        assert r2.J_star == pytest.approx(4.0 * r1.J_star, rel=1e-6)

    def test_start_at_optimum_stays_there(self, params):
        opts = optimize.OptimizerOptions(multi_start=False)
        first = optimize.maximize_gains(params, ControlGains(0.3, 925.0), opts)
        again = optimize.maximize_gains(params, first.gains_star, opts)
        assert again.converged
        assert again.J_star >= first.J_star * (1.0 - 1e-9)
        assert again.gains_star.K_m == pytest.approx(first.gains_star.K_m,
                                                     rel=1e-3)

    def test_multi_start_records_every_start(self, params):
        result = optimize.maximize_gains(params, ControlGains(0.3, 925.0))
        assert len(result.starts) == 1 + len(optimize.DEFAULT_STARTS)
        assert result.J_star == pytest.approx(
            max(j for _, j, _ in result.starts), rel=1e-12)

    def test_iterates_are_feasible_and_traced(self, params):
        result = optimize.maximize_gains(
            params, ControlGains(0.3, 925.0),
            optimize.OptimizerOptions(multi_start=False))
        assert result.trace
        for g, j in result.trace:
            assert g.K_m > 0 and g.K_e > -1
            assert np.isfinite(j)

    def test_iteration_budget_is_respected(self, params):
        opts = optimize.OptimizerOptions(multi_start=False, max_iterations=3)
        result = optimize.maximize_gains(params, ControlGains(0.3, 925.0), opts)
        assert result.iterations <= 3
        assert not result.converged


class TestSerialization:
    def test_sweep_csv_roundtrip(self, params, tmp_path):
        result = optimize.sweep(params, [0.1, 0.3], [10.0, 900.0])
        path = tmp_path / "sweep.csv"
        optimize.sweep_to_csv(result, path)
        data = np.genfromtxt(path, delimiter=",", skip_header=3,
                             usecols=(0, 1, 2))
        assert data.shape == (4, 3)
        assert np.allclose(data[:, 2].reshape(2, 2), result.J)
        header = path.read_text().splitlines()
        assert header[0] == "# method=lyapunov transfer_mode=statespace"
        assert header[2] == "K_m,K_e,J,method"

    def test_optim_json_roundtrip(self, params, tmp_path):
        result = optimize.maximize_gains(
            params, ControlGains(0.3, 925.0),
            optimize.OptimizerOptions(multi_start=False))
        path = tmp_path / "optimize.json"
        optimize.optim_to_json(result, path)
        doc = json.loads(path.read_text())
        assert doc["J_star"] == result.J_star
        assert doc["gains_star"] == {"K_m": result.gains_star.K_m,
                                     "K_e": result.gains_star.K_e}
        assert doc["converged"] is True
        assert len(doc["trace"]) == len(result.trace)
