import numpy as np
import pytest

from boilersim import boiler_core as bc
from boilersim import steam_props as sp
from boilersim.sim_engine import load_scenario, run


@pytest.fixture(scope="session")
def params():
    return bc.BoilerParams()


@pytest.fixture(scope="session")
def steady(params):
    return bc.steady_state(params)


@pytest.fixture(scope="session")
def spike_scenario():
    return load_scenario("spike")


@pytest.fixture(scope="session")
def spike_traj(spike_scenario):
    return run(spike_scenario)


@pytest.fixture(scope="session")
def variable_traj():
    return run(load_scenario("variable-load"))


def manual_coefficients(state, params):
    """C1, C2, C3, K1, K2 rebuilt from raw saturation properties."""
    s = sp.saturation_at(state.P)
    C1 = (state.M_w_D / s.rho_w ** 2 * s.d_rho_w_dP + state.M_s_D / s.rho_s ** 2 * s.d_rho_s_dP)
    Mw, Ms = state.M_w_R.sum(), state.M_s_R.sum()
    C2 = Mw / s.rho_w ** 2 * s.d_rho_w_dP + Ms / s.rho_s ** 2 * s.d_rho_s_dP
    C3 = (1 / s.rho_w - 1 / s.rho_s) / (s.h_s - s.h_w)
    K1 = (state.M_s_D * s.d_h_s_dP + state.M_w_D * s.d_h_w_dP - params.V_D
          + params.M_m_D * params.C_p * s.d_T_s_dP)
    K2 = (Ms * s.d_h_s_dP + Mw * s.d_h_w_dP - params.V_R
          + params.M_m_R * params.C_p * s.d_T_s_dP)
    return s, C1, C2, C3, K1, K2


def composed_pressure_rate(state, inputs, params):
    """Solve the lumped volume and energy constraints as one linear system.

    Unknowns: P_dot, g = f_w/rho_w + f_s/rho_s, f_ell, Q_H, Q_B.
    """
    s, C1, C2, C3, K1, K2 = manual_coefficients(state, params)
    rw, rs = s.rho_w, s.rho_s
    A = np.array([
        # drum volume: C1 P_dot = (q_f - f_wstar)/rho_w - q_s/rho_s + g
        [C1, -1.0, 0.0, 0.0, 0.0],
        # riser volume: g = (f_wstar - f_ell)/rho_w + f_ell/rho_s - C2 P_dot
        [C2, 1.0, 1.0 / rw - 1.0 / rs, 0.0, 0.0],
        # drum energy: K1 P_dot - Q_H = q_f (h_w_f - h_w)
        [K1, 0.0, 0.0, -1.0, 0.0],
        # riser energy: K2 P_dot + (h_s - h_w) f_ell - Q_B = 0
        [K2, 0.0, s.h_s - s.h_w, 0.0, -1.0],
        [0.0, 0.0, 0.0, 1.0, 1.0],
    ])
    b = np.array([
        (inputs.q_f - state.f_wstar) / rw - inputs.q_s / rs,
        state.f_wstar / rw,
        inputs.q_f * (params.h_w_f - s.h_w),
        0.0,
        inputs.Q_T,
    ])
    return np.linalg.solve(A, b)


def random_state(rng, steady_state, params):
    """Perturbed but physically plausible boiler state and inputs."""
    st, inp = steady_state
    P = rng.uniform(0.6e6, 2.6e6)
    s = sp.saturation_at(P)
    n = params.n
    # pick volume fractions, then derive masses so both vessels are full
    steam_frac_D = rng.uniform(0.3, 0.7)
    M_s_D = s.rho_s * params.V_D * steam_frac_D
    M_w_D = s.rho_w * params.V_D * (1 - steam_frac_D)
    V_i = params.V_R / n
    frac = np.sort(rng.uniform(0.01, 0.6, n))
    M_s_R = s.rho_s * V_i * frac
    M_w_R = s.rho_w * V_i * (1 - frac)
    state = bc.BoilerState(P, M_s_D, M_w_D, M_s_R, M_w_R, rng.uniform(40, 120),
                           rng.uniform(2.0, 12.0))
    inputs = bc.BoilerInputs(q_s=rng.uniform(2, 20), q_f=rng.uniform(0, 20),
                             Q_T=rng.uniform(0.5e7, 4e7))
    return state, inputs
