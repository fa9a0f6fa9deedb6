import json
import math
from dataclasses import replace

import numpy as np
import pytest

from boilersim import boiler_core as bc
from boilersim.errors import CollapseError, ScenarioError, SimulationError
from boilersim.sim_engine import (PlantConfig, Profile, ReceiverConfig, Scenario,
                                  SuperheaterConfig, apply_overrides, builtin_scenario_dict,
                                  convergence_check, load_scenario, max_stable_dt, run,
                                  scenario_from_dict, schema_keys)


class TestProfile:
    def test_interpolates_and_clamps(self):
        p = Profile([10.0, 20.0], [1.0, 3.0])
        assert p(0.0) == 1.0 and p(15.0) == 2.0 and p(100.0) == 3.0

    def test_relative_scaling(self):
        p = Profile([0.0, 1.0], [1.0, 1.5], relative=True).resolve(10.0)
        assert p(1.0) == 15.0 and not p.relative

    def test_decreasing_time_rejected(self):
        with pytest.raises(ScenarioError):
            Profile([0.0, 2.0, 1.0], [1.0, 1.0, 1.0])

    def test_csv_round_trip(self, tmp_path):
        f = tmp_path / "p.csv"
        f.write_text("t,value\n0,10\n5,12\n")
        p = Profile.from_csv(f)
        assert p(2.5) == 11.0

    def test_csv_header_checked(self, tmp_path):
        f = tmp_path / "p.csv"
        f.write_text("time,q\n0,10\n")
        with pytest.raises(ScenarioError, match="header"):
            Profile.from_csv(f)


class TestRun:
    def test_equilibrium_persists(self):
        traj = run(Scenario(t_end=100.0))
        assert np.max(np.abs(traj.delta)) < 1e-6
        assert np.max(np.abs(traj.P - traj.P[0])) < 10.0

    def test_sample_count_and_grid(self):
        sc = Scenario(t_end=1.0, dt=0.01, record_stride=7)
        traj = run(sc)
        assert len(traj.t) == math.floor(1.0 / (0.01 * 7)) + 1
        assert np.all(np.diff(traj.t) > 0)

    def test_spike_lowers_pressure_during_ramp(self, spike_traj):
        t, P = spike_traj.t, spike_traj.P
        ramp = (t >= 200.0) & (t <= 210.0)
        assert np.all(np.diff(P[ramp]) < 0)

    def test_deterministic(self, spike_scenario, spike_traj):
        again = run(spike_scenario)
        assert again.to_csv() == spike_traj.to_csv()

    def test_conservation_along_spike(self, spike_traj):
        assert np.max(np.abs(spike_traj.mass_drift())) < 1e-9
        drum, riser = spike_traj.volume_closure()
        assert np.max(np.abs(drum)) < 1e-9 and np.max(np.abs(riser)) < 1e-9

    def test_csv_header(self, spike_traj):
        header = spike_traj.to_csv().splitlines()[0].split(",")
        assert header[:10] == ["t", "P", "delta", "f_wstar", "f_s", "f_w", "f_ell", "Q_H",
                               "Q_B", "M_s_BW"]
        assert header[10:17] == [f"alpha_{k}" for k in range(1, 8)]

    def test_unstable_step_rejected(self):
        with pytest.raises(ScenarioError, match="stability"):
            run(Scenario(t_end=1.0, dt=0.04))

    def test_stability_limit_from_fast_mode(self, steady, params):
        limit = max_stable_dt(*steady, params)
        assert 0.01 < limit < 0.04

    def test_failure_reports_time_and_state(self):
        # cutting the steam draw under full firing condenses the lowest section
        sc = Scenario(t_end=200.0, dt=0.01, record_stride=100, q_s=Profile.constant(0.0),
                      q_f=Profile.constant(0.0))
        with pytest.raises(SimulationError) as exc:
            run(sc)
        assert isinstance(exc.value.__cause__, CollapseError)
        assert exc.value.__cause__.section == 1
        assert 0 < exc.value.time < 200.0
        assert exc.value.state.P > bc.NOMINAL_PRESSURE

    def test_feed_alias_copies_steam_flow(self, spike_traj):
        np.testing.assert_array_equal(spike_traj.q_f, spike_traj.q_s)


class TestPlant:
    def test_plant_equilibrium_and_transient(self):
        prof = Profile([0, 20, 30], [1.0, 1.0, 1.2], relative=True)
        sc = Scenario(t_end=60.0, q_s=prof, q_f="q_s",
                      plant=PlantConfig(SuperheaterConfig(), ReceiverConfig()))
        traj = run(sc)
        before = traj.t <= 20.0
        assert np.ptp(traj.plant[before], axis=0) == pytest.approx(np.zeros(6), abs=1e-6)
        # outflows follow the inflow, so vessel masses stay put
        assert np.ptp(traj.plant[:, 0]) < 1e-8 and np.ptp(traj.plant[:, 3]) < 1e-8
        assert np.ptp(traj.plant[:, 1]) > 0

    def test_receiver_collects_several_boilers(self):
        sc = Scenario(t_end=5.0, plant=PlantConfig(None, ReceiverConfig(n_boilers=3)))
        traj = run(sc)
        assert np.ptp(traj.plant[:, 3:], axis=0) == pytest.approx(np.zeros(3), abs=1e-6)


class TestConvergence:
    def test_shrinking_differences(self, spike_scenario):
        sc = replace(spike_scenario, t_end=230.0)
        rows = convergence_check(sc, [0.01, 0.005, 0.0025])
        assert rows[1]["max_delta_diff"] < rows[0]["max_delta_diff"]
        assert rows[1]["order"] >= 1.0

    def test_equilibrium_differences_vanish(self):
        rows = convergence_check(Scenario(t_end=20.0), [0.01, 0.005])
        assert rows[0]["max_delta_diff"] < 1e-12

    def test_non_halving_rejected(self):
        with pytest.raises(ScenarioError, match="halve"):
            convergence_check(Scenario(t_end=1.0), [0.01, 0.004])


class TestScenarioFiles:
    def test_builtins_load(self):
        for name in ("nominal", "spike", "variable-load", "plant"):
            assert load_scenario(name).name == name

    def test_zero_dt_is_schema_violation(self):
        with pytest.raises(ScenarioError, match="integration.dt"):
            load_scenario("spike", ["integration.dt=0"])

    def test_unknown_key_rejected(self):
        with pytest.raises(ScenarioError):
            load_scenario("spike", ["params.bogus=1"])

    def test_overrides_apply(self):
        sc = load_scenario("spike", ["params.n=5", "integration.omega_enabled=false"])
        assert sc.params.n == 5 and sc.omega_enabled is False

    def test_geometry_change_recalibrates(self):
        sc = load_scenario("nominal", ["params.L_DC=14", "params.V_DC=21"])
        assert sc.circulation_ratio == bc.DEFAULT_CIRCULATION_RATIO

    def test_csv_profile_relative_to_file(self, tmp_path):
        (tmp_path / "load.csv").write_text("t,value\n0,10\n1,11\n")
        doc = {"name": "x", "profiles": {"q_s": {"csv": "load.csv"}},
               "integration": {"t_end": 1.0}}
        path = tmp_path / "x.json"
        path.write_text(json.dumps(doc))
        sc = load_scenario(path)
        assert sc.q_s(1.0) == 11.0

    def test_missing_file(self, tmp_path):
        with pytest.raises(ScenarioError, match="not found"):
            load_scenario(tmp_path / "none.json")

    def test_schema_keys_cover_params(self):
        keys = schema_keys()
        for f in ("A_R", "k_s", "h_w_f", "n"):
            assert f"params.{f}" in keys

    def test_apply_overrides_copies(self):
        doc = builtin_scenario_dict("nominal")
        new = apply_overrides(doc, ["integration.t_end=5"])
        assert new["integration"]["t_end"] == 5 and doc["integration"]["t_end"] == 100.0

    def test_from_dict_defaults(self):
        sc = scenario_from_dict({})
        assert sc.dt == 0.01 and sc.params == bc.BoilerParams()
