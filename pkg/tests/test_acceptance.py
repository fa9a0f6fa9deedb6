"""Acceptance criteria, one PASS/FAIL line each.

Run under pytest (lines appear in the terminal output) or directly with
``python3 tests/test_acceptance.py``.
"""

import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from boilersim import analysis as an  # noqa: E402
from boilersim import boiler_core as bc  # noqa: E402
from boilersim import plant_components as pc  # noqa: E402
from boilersim import steam_props as sp  # noqa: E402
from boilersim.sim_engine import Scenario, load_scenario, run  # noqa: E402

from conftest import composed_pressure_rate, random_state  # noqa: E402

SPIKE_END = 220.0


def _line(tag, label, ok, detail):
    return f"[{tag}] {'PASS' if ok else 'FAIL'}  {label}  ({detail})"


# --------------------------------------------------------------------------
# criterion checks: each returns (ok, detail)


def c1a_water_volume():
    v = 1 / sp.saturation_at(1.65e6).rho_w
    return abs(v / 1.16e-3 - 1) <= 0.01, f"1/rho_w = {v:.5e} m3/kg, target 1.16e-3 +- 1%"


def c1b_steam_volume():
    v = 1 / sp.saturation_at(1.65e6).rho_s
    return abs(v / 0.112 - 1) <= 0.01, f"1/rho_s = {v:.5f} m3/kg, target 0.112 +- 1%"


def c2_C3():
    state, _ = bc.steady_state(bc.BoilerParams())
    C3 = bc.coeffs(state.P, state, bc.BoilerParams()).C3
    return abs(C3 / -6.16e-8 - 1) <= 0.02, f"C3 = {C3:.5e}, target -6.16e-8 +- 2%"


def c3_dominance():
    r = an.pressure_coefficients(bc.BoilerParams()).dominance_ratio
    return r >= 100, f"dominance ratio = {r:.2f}, need >= 100"


def c4a_steady_quality():
    params = bc.BoilerParams()
    state, inputs = bc.steady_state(params)
    _, flows = bc.state_derivative(state, inputs, params)
    k = np.arange(1, params.n + 1)
    dev = float(np.max(np.abs(flows.alpha / (k * flows.alpha[0]) - 1)))
    return dev < 1e-3, f"max_k |abar_k - 1| = {dev:.2e}, need < 1e-3"


def c4b_quality_ordering(spike):
    r = an.alpha_ratio(spike)
    d7, d2 = r.max_deviation(7), r.max_deviation(2)
    return d7 > d2, f"max |abar_7 - 1| = {d7:.4f} vs max |abar_2 - 1| = {d2:.4f}"


def c4c_quality_persistence(spike):
    last = an.alpha_ratio(spike).last_exceedance(7, 1e-3)
    lasting = (last or 0.0) - SPIKE_END
    return lasting > 20.0, (f"|abar_7 - 1| > 1e-3 until t = {last} s, "
                            f"{lasting:.1f} s after the spike ends, need > 20 s")


def c4d_runtime_300():
    sc = load_scenario("spike")
    t0 = time.perf_counter()
    run(sc)
    el = time.perf_counter() - t0
    return el < 5.0, f"300 s trajectory in {el:.2f} s, need < 5 s"


def c5_pressure_identity():
    params = bc.BoilerParams()
    steady = bc.steady_state(params)
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        state, inputs = random_state(rng, steady, params)
        a = bc.pressure_derivative(state, inputs, params)
        b = composed_pressure_rate(state, inputs, params)[0]
        worst = max(worst, abs(a - b) / max(abs(b), 1e-300))
    return worst < 1e-9, f"worst relative mismatch over 1000 states = {worst:.2e}, need < 1e-9"


def c6a_mass_drift(variable):
    drift = np.abs(variable.mass_drift())
    per100 = float(drift.max()) / (variable.t[-1] / 100.0)
    return per100 < 1e-6, f"mass drift {per100:.2e} per 100 s, need < 1e-6"


def c6b_volume_closure(variable):
    drum, riser = variable.volume_closure()
    worst = max(np.abs(drum).max(), np.abs(riser).max())
    return worst < 1e-3, f"max volume residual {worst:.2e} over 600 s, need < 1e-3"


def c7_proportionality(variable):
    c = an.proportionality_report(variable, with_pade=False).correlation
    return c is not None and c > 0.5, f"correlation(q_s, delta) = {c:.4f}, need > 0.5"


def c8_omega_effect():
    eff = an.omega_effect(load_scenario("spike"))
    return eff.significant, (f"max |delta_omega - delta_0| = {eff.max_difference:.3e} m, "
                             f"noise floor {eff.noise_floor:.3e} m, ratio {eff.ratio:.0f}")


def c9a_pade_fidelity():
    params = bc.BoilerParams()
    state, inputs = bc.steady_state(params)
    a = bc.state_derivative(state, inputs, params)[1].a
    dt = 0.01
    freq = 0.01 / a  # Hz, the bandwidth bound itself
    t = np.arange(0.0, 5.0 / freq, dt)
    f = inputs.q_s * (1 + 0.2 * np.sin(2 * np.pi * freq * t))
    c = an.pade_delay_compare(f, dt, a)
    return c.rms_rel_range < 0.01, (f"RMS discrepancy {100 * c.rms_rel_range:.4f}% of range "
                                    f"at {freq:.4f} Hz (a = {a:.4f} s), need < 1%")


def c9b_exact_settling():
    a, dt = 0.5, 0.01
    t = np.arange(0.0, 10.0, dt)
    f = np.where(t >= 2.0, 12.0, 10.0)
    c = an.pade_delay_compare(f, dt, a)
    ts = an.settling_time(c.t, c.exact, 2.0, fraction=1.0, atol=1e-9)
    return ts is not None and abs(ts - a) < 1e-9, f"exact settling {ts} s for a = {a} s"


def c10a_plant_equilibria():
    P = 1.65e6
    h_in = sp.saturation_at(P).h_s
    sh = pc.SuperheaterState.at(P, h_in + 2e6 / 10.0, 5.0, 2e6)
    r1 = np.abs(pc.superheater_derivatives(sh, 10.0, h_in, 10.0)).max()
    rc = pc.ReceiverState.at(P, sh.h_s_SH, 20.0, [(10.0, sh.h_s_SH)], 10.0)
    r2 = np.abs(pc.receiver_derivatives(rc)).max()
    worst = max(r1, r2)
    return worst < 1e-9, f"max |rate| at matched flow = {worst:.2e}, need < 1e-9"


def c10b_plant_decoupling():
    from test_plant_components import coupled_residuals
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(500):
        P = rng.uniform(0.3e6, 2.8e6)
        hs = sp.saturation_at(P).h_s
        h = hs + rng.uniform(2e4, 5e5)
        inflows = [(rng.uniform(0.5, 20), hs + rng.uniform(0, 3e5)) for _ in range(3)]
        q_out, Q = rng.uniform(0, 60), rng.uniform(0, 5e6)
        if rng.random() < 0.5:
            flows = inflows[:1]
            st = pc.SuperheaterState.at(P, h, 5.0, Q)
            d = pc.superheater_derivatives(st, flows[0][0], flows[0][1], q_out)
            r = coupled_residuals(st.M_s_SH, h, P, 5.0, flows, q_out, Q, *d)
        else:
            flows, Q = inflows, 0.0
            st = pc.ReceiverState.at(P, h, 20.0, flows, q_out)
            d = pc.receiver_derivatives(st)
            r = coupled_residuals(st.M_s_E, h, P, 20.0, flows, q_out, Q, *d)
        q_tot = sum(q for q, _ in flows)
        scales = (q_tot + q_out, (q_tot + q_out) * 3.5e6 + Q,
                  (q_tot + q_out) / sp.superheated_at(P, h).rho)
        worst = max(worst, max(abs(x) / s for x, s in zip(r, scales)))
    return worst < 1e-9, f"worst scaled residual of coupled balances = {worst:.2e}"


def c11a_runtime_600():
    sc = Scenario(t_end=600.0, dt=0.01, params=bc.BoilerParams(),
                  q_s=load_scenario("variable-load").q_s, q_f="q_s")
    t0 = time.perf_counter()
    run(sc)
    el = time.perf_counter() - t0
    return el < 5.0, f"600 s at dt = 10 ms, n = 7 in {el:.2f} s, need < 5 s"


def c11b_dt_halving():
    sc = load_scenario("spike")
    a = run(sc)
    b = run(replace(sc, dt=sc.dt / 2, record_stride=2 * sc.record_stride))
    ma, mb = np.abs(a.delta).max(), np.abs(b.delta).max()
    rel = abs(ma - mb) / mb
    return rel < 0.02, f"max |delta| changes by {100 * rel:.2e}% when dt halves, need < 2%"


# --------------------------------------------------------------------------
# pytest wiring


@pytest.fixture(scope="module", autouse=True)
def warm_jit():
    run(Scenario(t_end=0.1))


@pytest.fixture(scope="module")
def spike():
    return run(load_scenario("spike"))


@pytest.fixture(scope="module")
def variable():
    return run(load_scenario("variable-load"))


CRITERIA = [
    ("1a", "property values: 1/rho_w", c1a_water_volume, ()),
    ("1b", "property values: 1/rho_s", c1b_steam_volume, ()),
    ("2", "C3 at the nominal point", c2_C3, ()),
    ("3", "q_s coefficient dominance", c3_dominance, ()),
    ("4a", "steady linear steam quality", c4a_steady_quality, ()),
    ("4b", "quality discrepancy grows with height", c4b_quality_ordering, ("spike",)),
    ("4c", "quality discrepancy persists", c4c_quality_persistence, ("spike",)),
    ("4d", "runtime 300 s", c4d_runtime_300, ()),
    ("5", "pressure-route identity", c5_pressure_identity, ()),
    ("6a", "mass conservation", c6a_mass_drift, ("variable",)),
    ("6b", "volume closure", c6b_volume_closure, ("variable",)),
    ("7", "level/steam-flow proportionality", c7_proportionality, ("variable",)),
    ("8", "Omega effect above noise", c8_omega_effect, ()),
    ("9a", "Pade fidelity", c9a_pade_fidelity, ()),
    ("9b", "exact delay settles in a", c9b_exact_settling, ()),
    ("10a", "plant equilibria stationary", c10a_plant_equilibria, ()),
    ("10b", "plant decoupled rates", c10b_plant_decoupling, ()),
    ("11a", "runtime 600 s", c11a_runtime_600, ()),
    ("11b", "dt-halving change in max |delta|", c11b_dt_halving, ()),
]


@pytest.mark.parametrize("tag, label, check, needs", CRITERIA, ids=[c[0] for c in CRITERIA])
def test_criterion(tag, label, check, needs, request, capsys):
    args = [request.getfixturevalue(name) for name in needs]
    ok, detail = check(*args)
    with capsys.disabled():
        print("\n" + _line(tag, label, ok, detail))
    assert ok, detail


def main() -> int:
    run(Scenario(t_end=0.1))
    shared = {"spike": run(load_scenario("spike")),
              "variable": run(load_scenario("variable-load"))}
    failed = 0
    for tag, label, check, needs in CRITERIA:
        ok, detail = check(*(shared[n] for n in needs))
        failed += not ok
        print(_line(tag, label, ok, detail))
    print(f"{len(CRITERIA) - failed}/{len(CRITERIA)} criteria pass")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
