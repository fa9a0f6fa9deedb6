"""Nonlinear natural-circulation drum boiler model.

State: drum pressure, drum steam/water masses, per-section riser steam/water
masses, downcomer mass flow and the mass of steam below the drum water line.
Everything the integrator touches is a numba kernel over a flat state vector;
the dataclass-level functions below wrap those kernels for direct use.

State vector layout (length 2n + 5)::

    [P, M_s_D, M_w_D, M_s_R[0..n-1], M_w_R[0..n-1], f_wstar, M_s_BW]
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import NamedTuple

import numpy as np
from numba import njit
from scipy.optimize import brentq

from . import steam_props as sp
from .errors import (CollapseError, DryoutError, PropertyRangeError,
                     SingularPressureError, SteadyStateError)
from .steam_props import TABLES

NOMINAL_PRESSURE = 1.65e6
NOMINAL_STEAM_FLOW = 10.0
DEFAULT_CIRCULATION_RATIO = 8.0
FEED_SUBCOOLING = 1.0e4  # J/kg below h_w(P0)

# packed parameter vector indices
(IA_R, IV_R, IA_D, IV_D, IL_DC, IA_DC, IV_DC, IMM_D, IMM_R, IC_P, IK_WSTAR,
 IK_W, IK_S, IG, IL_NOM, IH_WF, IA_MAX, IEPS_FLOW, IEPS_MASS) = range(19)
N_PAR = 19

# derived-scalar vector indices
(DF_ELL, DQ_H, DQ_B, DP_DOT, DDELTA, DA, DCAPPED, DOMEGA) = range(8)
N_DER = 8

# per-section output rows
SF_ELL, SF_S, SF_W, SALPHA = range(4)

# kernel status codes (positive values name a dried-out section, 1-based;
# COLLAPSED - k names a fully condensed section k)
OK = 0
SINGULAR = -1
P_LOW = -2
P_HIGH = -3
COLLAPSED = -100


# friction coefficients calibrated with calibrate_friction() at the default
# geometry, P0 = 1.65 MPa, q_s = 10 kg/s, n = 7, circulation ratio 8
_K_DEFAULT = 8478.780274909213
_K_S_DEFAULT = 81.96830532411988


@dataclass
class BoilerParams:
    """Boiler geometry, metal masses and loss coefficients (SI units)."""

    A_R: float = 1.5        # total riser flow area [m2]
    V_R: float = 10.5       # riser volume [m3]
    A_D: float = 11.1       # drum area at centre line [m2]
    V_D: float = 12.0       # drum volume [m3]
    L_DC: float = 7.0       # downcomer length [m]
    A_DC: float = 1.5       # downcomer flow area [m2]
    V_DC: float = 10.5      # downcomer volume [m3]
    M_m_D: float = 7400.0   # drum metal [kg]
    M_m_R: float = 40700.0  # riser metal [kg]
    C_p: float = 500.0      # metal heat capacity [J/kg/K]
    n: int = 7
    k_wstar: float = _K_DEFAULT
    k_w: float = _K_DEFAULT
    k_s: float = _K_S_DEFAULT
    g: float = 9.81
    L_nom: float | None = None   # default V_D / (2 A_D)
    h_w_f: float | None = None   # default h_w(P0) - FEED_SUBCOOLING
    a_max: float = 60.0          # transport delay cap [s]
    eps_flow: float = 1e-3       # steam-flow floor for the delay [kg/s]
    eps_mass: float = 1e-6       # dryout floor on section water mass [kg]

    def __post_init__(self):
        if self.L_nom is None:
            self.L_nom = self.V_D / (2.0 * self.A_D)
        if self.h_w_f is None:
            self.h_w_f = sp.saturation_at(NOMINAL_PRESSURE).h_w - FEED_SUBCOOLING
        self.validate()

    def validate(self):
        positive = ("A_R", "V_R", "A_D", "V_D", "L_DC", "A_DC", "V_DC", "M_m_D",
                    "M_m_R", "C_p", "g", "L_nom", "a_max", "eps_flow", "eps_mass")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("k_wstar", "k_w", "k_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        self.n = int(self.n)
        if abs(self.V_DC - self.A_DC * self.L_DC) > 0.01 * self.V_DC:
            raise ValueError("downcomer geometry inconsistent: V_DC != A_DC * L_DC (1%)")

    def packed(self) -> np.ndarray:
        return np.array([self.A_R, self.V_R, self.A_D, self.V_D, self.L_DC, self.A_DC,
                         self.V_DC, self.M_m_D, self.M_m_R, self.C_p, self.k_wstar,
                         self.k_w, self.k_s, self.g, self.L_nom, self.h_w_f,
                         self.a_max, self.eps_flow, self.eps_mass], dtype=np.float64)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class BoilerInputs:
    q_s: float  # steam out of drum [kg/s]
    q_f: float  # feedwater [kg/s]
    Q_T: float  # total heat [W]

    def __post_init__(self):
        for name in ("q_s", "q_f", "Q_T"):
            v = getattr(self, name)
            if not (v >= 0.0 and math.isfinite(v)):
                raise ValueError(f"{name} must be finite and non-negative, got {v!r}")


class DelayBuffer:
    """Ring buffer of f_s samples taken every `dt` seconds, newest at `head`.

    Before enough history exists, slots hold the initial (padding) value.
    """

    def __init__(self, values: np.ndarray, head: int, dt: float):
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self.head = int(head)
        self.dt = float(dt)

    @classmethod
    def filled(cls, value: float, dt: float, a_max: float) -> "DelayBuffer":
        size = int(math.ceil(a_max / dt)) + 2
        return cls(np.full(size, float(value)), 0, dt)

    def push(self, value: float) -> None:
        self.head = (self.head + 1) % len(self.values)
        self.values[self.head] = value

    def value_at(self, lag: float, f_now: float = 0.0, tau: float = 0.0) -> float:
        """f_s at (t_newest + tau - lag); `f_now` is f_s at t_newest + tau."""
        return float(delayed_value(self.values, self.head, self.dt, tau, lag, f_now))

    def copy(self) -> "DelayBuffer":
        return DelayBuffer(self.values.copy(), self.head, self.dt)

    def __eq__(self, other):
        return (isinstance(other, DelayBuffer) and self.head == other.head
                and self.dt == other.dt and np.array_equal(self.values, other.values))


@dataclass
class BoilerState:
    P: float
    M_s_D: float
    M_w_D: float
    M_s_R: np.ndarray
    M_w_R: np.ndarray
    f_wstar: float
    M_s_BW: float
    delay_buffer: DelayBuffer | None = field(default=None, compare=False)

    @property
    def n(self) -> int:
        return len(self.M_s_R)

    def to_vector(self) -> np.ndarray:
        return np.concatenate(([self.P, self.M_s_D, self.M_w_D], self.M_s_R, self.M_w_R,
                               [self.f_wstar, self.M_s_BW])).astype(np.float64)

    @classmethod
    def from_vector(cls, x, n: int, delay_buffer: DelayBuffer | None = None) -> "BoilerState":
        x = np.asarray(x, dtype=np.float64)
        if len(x) != 2 * n + 5:
            raise ValueError(f"state vector length {len(x)} does not match n = {n}")
        return cls(float(x[0]), float(x[1]), float(x[2]), x[3:3 + n].copy(),
                   x[3 + n:3 + 2 * n].copy(), float(x[3 + 2 * n]), float(x[4 + 2 * n]),
                   delay_buffer)

    def copy(self) -> "BoilerState":
        return replace(self, M_s_R=self.M_s_R.copy(), M_w_R=self.M_w_R.copy(),
                       delay_buffer=None if self.delay_buffer is None else self.delay_buffer.copy())

    def to_dict(self) -> dict:
        return {"P": self.P, "M_s_D": self.M_s_D, "M_w_D": self.M_w_D,
                "M_s_R": self.M_s_R.tolist(), "M_w_R": self.M_w_R.tolist(),
                "f_wstar": self.f_wstar, "M_s_BW": self.M_s_BW}


@dataclass
class BoilerDerivedFlows:
    f_ell_total: float
    f_ell: np.ndarray
    f_s: np.ndarray
    f_w: np.ndarray
    alpha: np.ndarray
    Q_H: float
    Q_B: float
    P_dot: float
    delta: float
    a: float
    delay_capped: bool = False
    omega: float = 0.0

    @property
    def f_s_out(self) -> float:
        return float(self.f_s[-1])

    @property
    def f_w_out(self) -> float:
        return float(self.f_w[-1])


class Coefficients(NamedTuple):
    C1: float
    C2: float
    C2_i: np.ndarray
    C3: float
    K1: float
    K2: float
    K2_i: np.ndarray


# --------------------------------------------------------------------------
# kernels


@njit(cache=True)
def coeffs_kernel(s, M_s_D, M_w_D, Ms_R, Mw_R, par, C2_i, K2_i):
    """Fill C2_i, K2_i; return (C1, C2, C3, K1, K2). `s` is a saturation tuple."""
    rho_w, rho_s, h_w, h_s = s[0], s[1], s[2], s[3]
    drw, drs, dhw, dhs, dTs = s[5], s[6], s[7], s[8], s[9]
    n = len(Ms_R)
    aw = drw / (rho_w * rho_w)
    as_ = drs / (rho_s * rho_s)
    C1 = M_w_D * aw + M_s_D * as_
    metal_D = par[IMM_D] * par[IC_P] * dTs
    K1 = M_s_D * dhs + M_w_D * dhw - par[IV_D] + metal_D
    V_i = par[IV_R] / n
    metal_i = par[IMM_R] / n * par[IC_P] * dTs
    C2 = 0.0
    K2 = 0.0
    for i in range(n):
        C2_i[i] = Mw_R[i] * aw + Ms_R[i] * as_
        K2_i[i] = Ms_R[i] * dhs + Mw_R[i] * dhw - V_i + metal_i
        C2 += C2_i[i]
        K2 += K2_i[i]
    C3 = (1.0 / rho_w - 1.0 / rho_s) / (h_s - h_w)
    return C1, C2, C3, K1, K2


@njit(cache=True)
def pdot_kernel(C1, C2, C3, K1, K2, rho_w, rho_s, h_w, q_s, q_f, Q_T, h_wf):
    """Return (P_dot, denominator, ok)."""
    den = C1 + C2 - C3 * (K1 + K2)
    scale = abs(C1) + abs(C2) + abs(C3 * (K1 + K2))
    if not (abs(den) > 1e-14 * scale):
        return 0.0, den, False
    num = q_f / rho_w - q_s / rho_s - C3 * (Q_T + q_f * (h_wf - h_w))
    return num / den, den, True


@njit(cache=True)
def heat_split_kernel(K1, K2, P_dot, q_f, Q_T, h_w, h_s, h_wf):
    """Return (Q_H, Q_B, f_ell_total)."""
    Q_H = K1 * P_dot - q_f * (h_wf - h_w)
    Q_B = Q_T - Q_H
    f_ell = (-K2 * P_dot + Q_B) / (h_s - h_w)
    return Q_H, Q_B, f_ell


@njit(cache=True)
def riser_kernel(P_dot, Q_B, K2_i, C2_i, Ms_R, Mw_R, f_wstar, rho_w, rho_s, h_w, h_s,
                 eps_mass, sec):
    """Bottom-up section flows into sec[SF_ELL/SF_S/SF_W/SALPHA, :].

    Returns 0, the 1-based index of the first dried-out section, or
    COLLAPSED - k for a section k whose steam mass went negative.
    """
    n = len(Ms_R)
    q_b = Q_B / n
    inv_hfg = 1.0 / (h_s - h_w)
    fw_prev = f_wstar
    fs_prev = 0.0
    for i in range(n):
        mw = Mw_R[i]
        ms = Ms_R[i]
        if mw <= eps_mass:
            return i + 1
        if ms < -eps_mass:
            return COLLAPSED - (i + 1)
        f_ell = (-K2_i[i] * P_dot + q_b) * inv_hfg
        ratio = ms / mw
        rhs = (fw_prev - f_ell) / rho_w + (f_ell + fs_prev) / rho_s - C2_i[i] * P_dot
        fw = rhs / (1.0 / rho_w + ratio / rho_s)
        fs = ratio * fw
        sec[SF_ELL, i] = f_ell
        sec[SF_W, i] = fw
        sec[SF_S, i] = fs
        sec[SALPHA, i] = ms / (ms + mw)
        fw_prev = fw
        fs_prev = fs
    return 0


@njit(cache=True)
def omega_kernel(dMw_R, dMs_R, Mw_R, Ms_R, f_w, f_s, fw_dot, fs_dot, rho_w, rho_s,
                 drw, drs, P_dot, A_R):
    """Time derivative of the riser momentum (the Omega term)."""
    water = (dMw_R * f_w / rho_w + Mw_R * fw_dot / rho_w
             - Mw_R * f_w / (rho_w * rho_w) * drw * P_dot)
    steam = (dMs_R * f_s / rho_s + Ms_R * fs_dot / rho_s
             - Ms_R * f_s / (rho_s * rho_s) * drs * P_dot)
    return (water + steam) / A_R


@njit(cache=True)
def downcomer_kernel(f_wstar, f_w, f_s, Mw_R, Ms_R, rho_w, rho_s, omega, par):
    """d(f_wstar)/dt for a given riser-momentum rate `omega`."""
    friction = (par[IK_WSTAR] * f_wstar * f_wstar / (rho_w * par[IA_DC])
                + par[IK_W] * f_w * f_w / (rho_w * par[IA_R])
                + par[IK_S] * f_s * f_s / (rho_s * par[IA_R]))
    gravity = (rho_w * par[IV_DC] - Mw_R - Ms_R) * par[IG]
    return (gravity - friction - omega) / par[IL_DC]


@njit(cache=True)
def drum_level_kernel(M_w_D, M_s_BW, rho_w, rho_s, V_D, A_D):
    return (M_w_D / rho_w + M_s_BW / rho_s - 0.5 * V_D) / A_D


@njit(cache=True)
def transport_delay(distance, rho_s, A_R, f_s, eps_flow, a_max):
    """Return (a, capped): time for steam to rise `distance` at the riser exit speed."""
    if f_s <= eps_flow:
        return a_max, True
    a = distance * rho_s * A_R / f_s
    if a > a_max:
        return a_max, True
    if a < 0.0:
        # level below the riser outlet reference
        return 0.0, True
    return a, False


@njit(cache=True)
def delayed_value(buf, head, dt, tau, lag, f_now):
    """Linear interpolation of f_s at (t_head + tau - lag)."""
    back = lag - tau
    if back <= 0.0:
        if tau <= 0.0:
            return f_now
        w = (tau - lag) / tau
        return buf[head] + (f_now - buf[head]) * w
    size = len(buf)
    j = back / dt
    j0 = int(math.floor(j))
    if j0 >= size - 1:
        return buf[(head + 1) % size]
    w = j - j0
    v0 = buf[(head - j0) % size]
    v1 = buf[(head - j0 - 1) % size]
    return (1.0 - w) * v0 + w * v1


@njit(cache=True)
def rhs_kernel(x, par, tables, q_s, q_f, Q_T, omega_on, fw_dot, fs_dot,
               buf, head, buf_dt, tau, dx, der, sec):
    """Full boiler right-hand side. Returns a status code (0 on success)."""
    n = (len(x) - 5) // 2
    P = x[0]
    if not P >= sp.P_MIN:
        return P_LOW
    if not P <= sp.P_MAX:
        return P_HIGH
    s = sp.saturation_kernel(P, tables.sat_x, tables.sat_c)
    rho_w, rho_s, h_w, h_s = s[0], s[1], s[2], s[3]
    drw, drs = s[5], s[6]
    M_s_D = x[1]
    M_w_D = x[2]
    Ms_R = x[3:3 + n]
    Mw_R = x[3 + n:3 + 2 * n]
    f_wstar = x[3 + 2 * n]
    M_s_BW = x[4 + 2 * n]
    h_wf = par[IH_WF]

    C2_i = np.empty(n)
    K2_i = np.empty(n)
    C1, C2, C3, K1, K2 = coeffs_kernel(s, M_s_D, M_w_D, Ms_R, Mw_R, par, C2_i, K2_i)
    P_dot, den, ok = pdot_kernel(C1, C2, C3, K1, K2, rho_w, rho_s, h_w, q_s, q_f, Q_T, h_wf)
    if not ok:
        return SINGULAR
    Q_H, Q_B, f_ell = heat_split_kernel(K1, K2, P_dot, q_f, Q_T, h_w, h_s, h_wf)
    status = riser_kernel(P_dot, Q_B, K2_i, C2_i, Ms_R, Mw_R, f_wstar, rho_w, rho_s,
                          h_w, h_s, par[IEPS_MASS], sec)
    if status != 0:
        return status
    f_s = sec[SF_S, n - 1]
    f_w = sec[SF_W, n - 1]

    dx[0] = P_dot
    dx[1] = f_s - q_s
    dx[2] = q_f + f_w - f_wstar
    Ms_tot = 0.0
    Mw_tot = 0.0
    fw_in = f_wstar
    fs_in = 0.0
    for i in range(n):
        dx[3 + i] = sec[SF_ELL, i] + fs_in - sec[SF_S, i]
        dx[3 + n + i] = fw_in - sec[SF_W, i] - sec[SF_ELL, i]
        fs_in = sec[SF_S, i]
        fw_in = sec[SF_W, i]
        Ms_tot += Ms_R[i]
        Mw_tot += Mw_R[i]

    omega = 0.0
    if omega_on:
        omega = omega_kernel(f_wstar - f_w - f_ell, f_ell - f_s, Mw_tot, Ms_tot, f_w, f_s,
                             fw_dot, fs_dot, rho_w, rho_s, drw, drs, P_dot, par[IA_R])
    dx[3 + 2 * n] = downcomer_kernel(f_wstar, f_w, f_s, Mw_tot, Ms_tot, rho_w, rho_s,
                                     omega, par)

    delta = drum_level_kernel(M_w_D, M_s_BW, rho_w, rho_s, par[IV_D], par[IA_D])
    a, capped = transport_delay(par[IL_NOM] + delta, rho_s, par[IA_R], f_s,
                                par[IEPS_FLOW], par[IA_MAX])
    dx[4 + 2 * n] = f_s - delayed_value(buf, head, buf_dt, tau, a, f_s)

    der[DF_ELL] = f_ell
    der[DQ_H] = Q_H
    der[DQ_B] = Q_B
    der[DP_DOT] = P_dot
    der[DDELTA] = delta
    der[DA] = a
    der[DCAPPED] = 1.0 if capped else 0.0
    der[DOMEGA] = omega
    return OK


# --------------------------------------------------------------------------
# dataclass-level operations


def _sat_tuple(P: float):
    sp.check_pressure(P)
    return sp.saturation_kernel(float(P), TABLES.sat_x, TABLES.sat_c)


def _raise_status(status: int, state_P: float = float("nan"), Mw=None, Ms=None):
    if status == OK:
        return
    if status <= COLLAPSED:
        section = COLLAPSED - int(status)
        mass = float("nan") if Ms is None else float(Ms[section - 1])
        raise CollapseError(section, mass)
    if status == SINGULAR:
        raise SingularPressureError("pressure equation denominator C1 + C2 - C3(K1 + K2) is zero")
    if status in (P_LOW, P_HIGH):
        sp.check_pressure(state_P)
        raise PropertyRangeError(f"pressure {state_P!r} outside table range")
    section = int(status)
    mass = float("nan") if Mw is None else float(Mw[section - 1])
    raise DryoutError(section, mass)


def coeffs(P: float, state: BoilerState, params: BoilerParams) -> Coefficients:
    """C1, C2 (and per-section C2^i), C3, K1, K2 (and per-section K2^i) at pressure P."""
    s = _sat_tuple(P)
    n = state.n
    C2_i = np.empty(n)
    K2_i = np.empty(n)
    C1, C2, C3, K1, K2 = coeffs_kernel(s, state.M_s_D, state.M_w_D, state.M_s_R,
                                       state.M_w_R, params.packed(), C2_i, K2_i)
    return Coefficients(C1, C2, C2_i, C3, K1, K2, K2_i)


def pressure_derivative(state: BoilerState, inputs: BoilerInputs, params: BoilerParams) -> float:
    s = _sat_tuple(state.P)
    c = coeffs(state.P, state, params)
    P_dot, _, ok = pdot_kernel(c.C1, c.C2, c.C3, c.K1, c.K2, s[0], s[1], s[2],
                               inputs.q_s, inputs.q_f, inputs.Q_T, params.h_w_f)
    if not ok:
        raise SingularPressureError("pressure equation denominator C1 + C2 - C3(K1 + K2) is zero")
    return P_dot


def heat_split(state: BoilerState, inputs: BoilerInputs, P_dot: float,
               params: BoilerParams) -> tuple[float, float, float]:
    """(Q_H, Q_B, f_ell_total) for a given pressure rate."""
    s = _sat_tuple(state.P)
    c = coeffs(state.P, state, params)
    return heat_split_kernel(c.K1, c.K2, P_dot, inputs.q_f, inputs.Q_T, s[2], s[3],
                             params.h_w_f)


def riser_section_flows(state: BoilerState, P_dot: float, f_ell_total: float,
                        params: BoilerParams):
    """Per-section (f_ell, f_s, f_w, alpha) arrays, computed from the bottom up.

    The boiling heat Q_B is recovered from the total evaporation rate and
    split evenly over the sections.
    """
    s = _sat_tuple(state.P)
    c = coeffs(state.P, state, params)
    Q_B = (s[3] - s[2]) * f_ell_total + c.K2 * P_dot
    sec = np.empty((4, state.n))
    status = riser_kernel(P_dot, Q_B, c.K2_i, c.C2_i, state.M_s_R, state.M_w_R,
                          state.f_wstar, s[0], s[1], s[2], s[3], params.eps_mass, sec)
    _raise_status(status, state.P, state.M_w_R, state.M_s_R)
    return sec[SF_ELL].copy(), sec[SF_S].copy(), sec[SF_W].copy(), sec[SALPHA].copy()


def omega_term(state: BoilerState, flows: BoilerDerivedFlows, P_dot: float,
               flow_rate_derivatives: tuple[float, float], params: BoilerParams) -> float:
    s = _sat_tuple(state.P)
    f_w = flows.f_w_out
    f_s = flows.f_s_out
    dMw_R = state.f_wstar - f_w - flows.f_ell_total
    dMs_R = flows.f_ell_total - f_s
    fw_dot, fs_dot = flow_rate_derivatives
    return omega_kernel(dMw_R, dMs_R, state.M_w_R.sum(), state.M_s_R.sum(), f_w, f_s,
                        fw_dot, fs_dot, s[0], s[1], s[5], s[6], P_dot, params.A_R)


def downcomer_derivative(state: BoilerState, flows: BoilerDerivedFlows, P_dot: float,
                         flow_rate_derivatives: tuple[float, float], params: BoilerParams,
                         omega_enabled: bool = True) -> float:
    """d(f_wstar)/dt from the downcomer-riser momentum balance.

    `flow_rate_derivatives` is (df_w/dt, df_s/dt) at the riser exit. With
    `omega_enabled` false the riser momentum rate is dropped.
    """
    s = _sat_tuple(state.P)
    omega = 0.0
    if omega_enabled:
        omega = omega_term(state, flows, P_dot, flow_rate_derivatives, params)
    return downcomer_kernel(state.f_wstar, flows.f_w_out, flows.f_s_out, state.M_w_R.sum(),
                            state.M_s_R.sum(), s[0], s[1], omega, params.packed())


def drum_level(state: BoilerState, params: BoilerParams) -> float:
    """Drum water level deviation from the half-full nominal level [m]."""
    s = _sat_tuple(state.P)
    return drum_level_kernel(state.M_w_D, state.M_s_BW, s[0], s[1], params.V_D, params.A_D)


def steam_below_water_derivative(state: BoilerState, f_s_now: float,
                                 params: BoilerParams) -> tuple[float, float]:
    """(dM_s_BW/dt, a) using the state's delay buffer as the f_s history."""
    if state.delay_buffer is None:
        raise ValueError("state has no delay buffer")
    s = _sat_tuple(state.P)
    delta = drum_level_kernel(state.M_w_D, state.M_s_BW, s[0], s[1], params.V_D, params.A_D)
    a, _ = transport_delay(params.L_nom + delta, s[1], params.A_R, f_s_now,
                           params.eps_flow, params.a_max)
    return f_s_now - state.delay_buffer.value_at(a), a


def _evaluate(x, params, inputs, omega_on, fw_dot, fs_dot, buf):
    n = (len(x) - 5) // 2
    dx = np.empty_like(x)
    der = np.empty(N_DER)
    sec = np.empty((4, n))
    status = rhs_kernel(x, params.packed(), TABLES, inputs.q_s, inputs.q_f, inputs.Q_T,
                        omega_on, fw_dot, fs_dot, buf.values, buf.head, buf.dt, 0.0,
                        dx, der, sec)
    _raise_status(status, x[0], x[3 + n:3 + 2 * n], x[3:3 + n])
    return dx, der, sec


def _flows_from(der, sec) -> BoilerDerivedFlows:
    return BoilerDerivedFlows(
        f_ell_total=float(der[DF_ELL]), f_ell=sec[SF_ELL].copy(), f_s=sec[SF_S].copy(),
        f_w=sec[SF_W].copy(), alpha=sec[SALPHA].copy(), Q_H=float(der[DQ_H]),
        Q_B=float(der[DQ_B]), P_dot=float(der[DP_DOT]), delta=float(der[DDELTA]),
        a=float(der[DA]), delay_capped=bool(der[DCAPPED]), omega=float(der[DOMEGA]))


def state_derivative(state: BoilerState, inputs: BoilerInputs, params: BoilerParams,
                     prev_flows: tuple[float, float, float] | None = None,
                     omega_enabled: bool = True):
    """Time derivative of the full boiler state plus the algebraic flows.

    `prev_flows` is (f_w, f_s, dt) from the previous step boundary and sets the
    backward differences used for the riser-exit flow rates; None means zero.
    Returns (derivative as a BoilerState, BoilerDerivedFlows).
    """
    x = state.to_vector()
    buf = state.delay_buffer
    if buf is None:
        # steady padding: the delayed value equals the current f_s
        buf = DelayBuffer.filled(0.0, 1.0, 1.0)
        probe, der, sec = _evaluate(x, params, inputs, omega_enabled, 0.0, 0.0, buf)
        buf = DelayBuffer.filled(sec[SF_S, -1], 1.0, params.a_max)
    fw_dot = fs_dot = 0.0
    if prev_flows is not None:
        _, _, sec = _evaluate(x, params, inputs, False, 0.0, 0.0, buf)
        f_w_prev, f_s_prev, dt = prev_flows
        fw_dot = (sec[SF_W, -1] - f_w_prev) / dt
        fs_dot = (sec[SF_S, -1] - f_s_prev) / dt
    dx, der, sec = _evaluate(x, params, inputs, omega_enabled, fw_dot, fs_dot, buf)
    return BoilerState.from_vector(dx, state.n), _flows_from(der, sec)


def total_mass(state: BoilerState) -> float:
    return state.M_s_D + state.M_w_D + state.M_s_R.sum() + state.M_w_R.sum()


def volume_closure(state: BoilerState, params: BoilerParams) -> tuple[float, np.ndarray]:
    """Relative drum and per-section riser volume residuals."""
    s = _sat_tuple(state.P)
    rho_w, rho_s = s[0], s[1]
    drum = (state.M_w_D / rho_w + state.M_s_D / rho_s - params.V_D) / params.V_D
    V_i = params.V_R / state.n
    riser = (state.M_w_R / rho_w + state.M_s_R / rho_s - V_i) / V_i
    return drum, riser


# --------------------------------------------------------------------------
# steady state


def _steady_riser(params: BoilerParams, rho_w: float, rho_s: float, q_s: float,
                  f_wstar: float):
    n = params.n
    alpha = np.arange(1, n + 1) * q_s / (n * f_wstar)
    V_i = params.V_R / n
    M = V_i / (alpha / rho_s + (1.0 - alpha) / rho_w)
    Ms = alpha * M
    return Ms, M - Ms


def _friction_terms(params, rho_w, rho_s, f_wstar, q_s):
    f_w = f_wstar - q_s
    return (f_wstar ** 2 / (rho_w * params.A_DC), f_w ** 2 / (rho_w * params.A_R),
            q_s ** 2 / (rho_s * params.A_R))


def _momentum_residual(f_wstar, params, rho_w, rho_s, q_s):
    Ms, Mw = _steady_riser(params, rho_w, rho_s, q_s, f_wstar)
    head = (rho_w * params.V_DC - Mw.sum() - Ms.sum()) * params.g
    t1, t2, t3 = _friction_terms(params, rho_w, rho_s, f_wstar, q_s)
    return head - params.k_wstar * t1 - params.k_w * t2 - params.k_s * t3


def calibrate_friction(params: BoilerParams, q_s: float, P: float,
                       circulation_ratio: float = DEFAULT_CIRCULATION_RATIO,
                       steam_weight: float | None = None) -> BoilerParams:
    """Return params whose loss coefficients give a steady downcomer flow of
    `circulation_ratio` times the steam flow.

    k_wstar = k_w = k and k_s = steam_weight * k. The default steam weight is
    rho_s/rho_w at `P`, which references the steam loss to liquid density so
    that the riser steam term does not swamp the circulation head.
    """
    if circulation_ratio <= 1.0:
        raise ValueError("circulation ratio must exceed 1")
    s = _sat_tuple(P)
    if steam_weight is None:
        steam_weight = s[1] / s[0]
    if steam_weight < 0:
        raise ValueError("steam_weight must be non-negative")
    f_wstar = circulation_ratio * q_s
    Ms, Mw = _steady_riser(params, s[0], s[1], q_s, f_wstar)
    head = (s[0] * params.V_DC - Mw.sum() - Ms.sum()) * params.g
    if head <= 0:
        raise SteadyStateError("no gravity head available for circulation")
    t1, t2, t3 = _friction_terms(params, s[0], s[1], f_wstar, q_s)
    k = float(head) / (t1 + t2 + steam_weight * t3)
    return replace(params, k_wstar=k, k_w=k, k_s=float(steam_weight * k))


def steady_state(params: BoilerParams, q_s_nominal: float = NOMINAL_STEAM_FLOW,
                 P_target: float = NOMINAL_PRESSURE, tol: float = 1e-8):
    """Equilibrium state and matching inputs at pressure `P_target`.

    Feedwater equals the steam flow, the firing rate covers evaporation plus
    feed heating, the riser steam quality rises linearly section by section,
    the downcomer flow balances the gravity head, and the drum is half full
    (zero level deviation) with the in-transit steam below the water line.
    """
    if not q_s_nominal > 0:
        raise ValueError("q_s_nominal must be positive")
    s = _sat_tuple(P_target)
    rho_w, rho_s, h_w, h_s = s[0], s[1], s[2], s[3]
    q_s = float(q_s_nominal)

    lo = q_s * (1.0 + 1e-9)
    if _momentum_residual(lo, params, rho_w, rho_s, q_s) <= 0:
        raise SteadyStateError("friction exceeds gravity head even at minimum circulation")
    hi = 2.0 * q_s
    while _momentum_residual(hi, params, rho_w, rho_s, q_s) > 0:
        hi *= 2.0
        if hi > 1e6 * q_s:
            raise SteadyStateError("circulation flow unbounded (zero friction?)")
    f_wstar = brentq(_momentum_residual, lo, hi, args=(params, rho_w, rho_s, q_s),
                     xtol=1e-13 * q_s, rtol=1e-15, maxiter=200)
    Ms_R, Mw_R = _steady_riser(params, rho_w, rho_s, q_s, f_wstar)

    # steam in transit below the water line at the nominal level
    M_s_BW = params.L_nom * rho_s * params.A_R
    M_w_D = rho_w * (0.5 * params.V_D - M_s_BW / rho_s)
    M_s_D = rho_s * (params.V_D - M_w_D / rho_w)

    inputs = BoilerInputs(q_s=q_s, q_f=q_s, Q_T=q_s * (h_s - params.h_w_f))
    state = BoilerState(float(P_target), M_s_D, M_w_D, Ms_R, Mw_R, f_wstar, M_s_BW)
    state.delay_buffer = DelayBuffer.filled(q_s, 1.0, params.a_max)

    residual = steady_residual(state, inputs, params)
    if np.max(np.abs(residual)) > tol:
        raise SteadyStateError(f"steady state residual {np.max(np.abs(residual)):.3e} > {tol:g}",
                               residual)
    return state, inputs


def steady_residual(state: BoilerState, inputs: BoilerInputs, params: BoilerParams) -> np.ndarray:
    """State derivative scaled to relative units (1/s)."""
    d, _ = state_derivative(state, inputs, params)
    q = max(inputs.q_s, 1e-12)
    x = d.to_vector()
    n = state.n
    scale = np.concatenate(([state.P], np.full(2 + 2 * n, q), [state.f_wstar], [q]))
    return x / scale
