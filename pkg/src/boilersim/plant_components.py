"""Superheater and steam receiver models on (P, h) superheated-steam states.

Both are constant-volume vessels with a mass balance and an energy balance;
the two coupled rate equations for enthalpy and pressure are solved in
closed form. The receiver has no heat input and any number of inflows.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from . import steam_props as sp
from .steam_props import TABLES


@dataclass
class SuperheaterState:
    M_s_SH: float  # steam mass [kg]
    h_s_SH: float  # enthalpy [J/kg]
    P_SH: float  # pressure [Pa]
    V_SH: float = 5.0  # volume [m3]
    Q_SH: float = 2.0e6  # heat input [W]

    @classmethod
    def at(cls, P: float, h: float, V: float = 5.0, Q: float = 2.0e6) -> "SuperheaterState":
        """Vessel filled to its volume at (P, h)."""
        rho = sp.superheated_at(P, h).rho
        return cls(rho * V, h, P, V, Q)

    def volume_residual(self) -> float:
        rho = sp.superheated_at(self.P_SH, self.h_s_SH).rho
        return self.M_s_SH / rho / self.V_SH - 1.0


@dataclass
class ReceiverState:
    M_s_E: float
    h_s_E: float
    P_E: float
    V_E: float = 20.0
    inflows: list[tuple[float, float]] = field(default_factory=list)  # (q_s_i, h_s_i)
    q_s_E: float = 0.0

    @classmethod
    def at(cls, P: float, h: float, V: float = 20.0, inflows=(), q_out: float = 0.0):
        rho = sp.superheated_at(P, h).rho
        return cls(rho * V, h, P, V, list(inflows), q_out)

    def with_flows(self, inflows, q_out: float) -> "ReceiverState":
        return replace(self, inflows=list(inflows), q_s_E=q_out)

    def volume_residual(self) -> float:
        rho = sp.superheated_at(self.P_E, self.h_s_E).rho
        return self.M_s_E / rho / self.V_E - 1.0


@njit(cache=True)
def vessel_rates(M, h, V, d_rho_dh, d_rho_dP, net_mass, energy):
    """Solve the energy and constant-volume balances for (dh/dt, dP/dt).

    `energy` is sum(q_in * (h_in - h)) + Q and `net_mass` the mass inflow
    minus outflow.
    """
    h_dot = (energy + net_mass / d_rho_dP) / (M + V * d_rho_dh / d_rho_dP)
    P_dot = (M * h_dot - energy) / V
    return h_dot, P_dot


@njit(cache=True)
def superheater_kernel(M, h, P, V, Q, q_in, h_in, q_out, tables):
    rho, d_rho_dh, d_rho_dP, y = sp.superheated_kernel(P, h, tables)
    energy = q_in * (h_in - h) + Q
    h_dot, P_dot = vessel_rates(M, h, V, d_rho_dh, d_rho_dP, q_in - q_out, energy)
    return q_in - q_out, h_dot, P_dot, y


@njit(cache=True)
def receiver_kernel(M, h, P, V, q_in, h_in, q_out, tables):
    rho, d_rho_dh, d_rho_dP, y = sp.superheated_kernel(P, h, tables)
    energy = 0.0
    total = 0.0
    for i in range(len(q_in)):
        energy += q_in[i] * (h_in[i] - h)
        total += q_in[i]
    h_dot, P_dot = vessel_rates(M, h, V, d_rho_dh, d_rho_dP, total - q_out, energy)
    return total - q_out, h_dot, P_dot, y


def superheater_derivatives(state: SuperheaterState, q_s_in: float, h_s_in: float,
                            q_s_out: float) -> tuple[float, float, float]:
    """(dM/dt, dh/dt, dP/dt) of a superheater fed `q_s_in` at enthalpy `h_s_in`."""
    sp.superheated_at(state.P_SH, state.h_s_SH)  # region check
    dM, dh, dP, _ = superheater_kernel(state.M_s_SH, state.h_s_SH, state.P_SH, state.V_SH,
                                       state.Q_SH, q_s_in, h_s_in, q_s_out, TABLES)
    return dM, dh, dP


def receiver_derivatives(state: ReceiverState) -> tuple[float, float, float]:
    """(dM/dt, dh/dt, dP/dt) of a steam receiver with its current inflows/outflow."""
    sp.superheated_at(state.P_E, state.h_s_E)
    q = np.array([f[0] for f in state.inflows], dtype=np.float64)
    hin = np.array([f[1] for f in state.inflows], dtype=np.float64)
    dM, dh, dP, _ = receiver_kernel(state.M_s_E, state.h_s_E, state.P_E, state.V_E,
                                    q, hin, state.q_s_E, TABLES)
    return dM, dh, dP
