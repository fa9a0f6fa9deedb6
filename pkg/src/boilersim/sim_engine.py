"""Fixed-step RK4 integration of the boiler (+ superheater, + receiver).

The f_s history for the steam-below-water delay lives in a ring buffer sampled
at step boundaries. The riser-exit flow rates used in the momentum term are
one-step backward differences of the boundary flows, frozen over a step.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
from numba import njit

from . import boiler_core as bc
from . import steam_props as sp
from .boiler_core import BoilerInputs, BoilerParams, BoilerState
from .errors import (CollapseError, DryoutError, PropertyRangeError, ScenarioError, SimulationError,
                     SingularPressureError, PhaseError)
from .plant_components import receiver_kernel, superheater_kernel
from .steam_props import TABLES

# tolerated extrapolation below the saturated-vapour line in the plant [J/kg]
WET_TOLERANCE = 2.0e4
# classical RK4 stability boundary on the negative real axis
RK4_REAL_LIMIT = 2.785

(SH_P_RANGE, SH_SUPERHEAT, RCV_P_RANGE, RCV_SUPERHEAT) = (-10, -11, -12, -13)
N_PLANT = 6


@dataclass
class Profile:
    """Piecewise-linear time series; clamps outside its breakpoints.

    With `relative` set, values are multiples of the steady-state nominal.
    """

    t: np.ndarray
    v: np.ndarray
    relative: bool = False

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.t.ndim != 1 or self.t.shape != self.v.shape or len(self.t) == 0:
            raise ScenarioError("profile needs matching, non-empty t and value arrays")
        if np.any(np.diff(self.t) < 0):
            raise ScenarioError("profile breakpoints must be non-decreasing in time")
        if not np.all(np.isfinite(self.v)):
            raise ScenarioError("profile values must be finite")

    @classmethod
    def constant(cls, value: float) -> "Profile":
        return cls(np.array([0.0]), np.array([float(value)]))

    @classmethod
    def from_csv(cls, path, relative: bool = False) -> "Profile":
        """Read a `t,value` CSV (header required)."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            if header[:2] != ["t", "value"]:
                raise ScenarioError(f"{path}: expected header 't,value', got {','.join(header)}")
            rows = [(float(r[0]), float(r[1])) for r in reader if r and r[0].strip()]
        if not rows:
            raise ScenarioError(f"{path}: no data rows")
        t, v = zip(*rows)
        return cls(np.array(t), np.array(v), relative)

    def resolve(self, nominal: float) -> "Profile":
        if not self.relative:
            return self
        return Profile(self.t, self.v * nominal, False)

    def __call__(self, t):
        return np.interp(t, self.t, self.v)


@dataclass
class SuperheaterConfig:
    V: float = 5.0
    Q: float = 2.0e6
    q_out: Profile | None = None  # default: same as drum steam flow


@dataclass
class ReceiverConfig:
    V: float = 20.0
    n_boilers: int = 1
    q_out: Profile | None = None  # default: n_boilers times the inflow


@dataclass
class PlantConfig:
    superheater: SuperheaterConfig | None = None
    receiver: ReceiverConfig | None = None


@dataclass
class Scenario:
    params: BoilerParams = field(default_factory=BoilerParams)
    q_s: Profile | None = None  # None: constant at nominal
    q_f: Profile | str | None = None  # "q_s": copy the steam flow profile
    Q_T: Profile | None = None
    t_end: float = 100.0
    dt: float = 0.01
    record_stride: int = 10
    omega_enabled: bool = True
    P_target: float = bc.NOMINAL_PRESSURE
    q_s_nominal: float = bc.NOMINAL_STEAM_FLOW
    circulation_ratio: float | None = None  # recalibrate friction when set
    plant: PlantConfig | None = None
    name: str = "scenario"

    def validate(self):
        if not self.dt > 0:
            raise ScenarioError(f"integration.dt must be > 0, got {self.dt!r}")
        if not self.t_end >= self.dt:
            raise ScenarioError("integration.t_end must be >= dt")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ScenarioError("integration.record_stride must be a positive integer")
        if not self.q_s_nominal > 0:
            raise ScenarioError("init.q_s_nominal must be positive")
        if not sp.P_MIN <= self.P_target <= sp.P_MAX:
            raise ScenarioError(f"init.P_target outside [{sp.P_MIN}, {sp.P_MAX}] Pa")

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.t_end / self.dt + 1e-9))


@dataclass
class Trajectory:
    """Recorded samples of one simulation run (SI units)."""

    t: np.ndarray
    X: np.ndarray  # (m, 2n+5) boiler state vectors
    derived: np.ndarray  # (m, N_DER) see boiler_core.D* indices
    sections: np.ndarray  # (m, 4, n) f_ell, f_s, f_w, alpha
    inputs: np.ndarray  # (m, 3) q_s, q_f, Q_T
    net_inflow: np.ndarray  # (m,) integral of q_f - q_s since t = 0
    plant: np.ndarray | None  # (m, 6) M_SH, h_SH, P_SH, M_E, h_E, P_E
    params: BoilerParams
    initial_inputs: BoilerInputs
    diagnostics: dict
    has_superheater: bool = False
    has_receiver: bool = False

    @property
    def n(self) -> int:
        return self.sections.shape[2]

    @property
    def P(self):
        return self.X[:, 0]

    @property
    def M_s_D(self):
        return self.X[:, 1]

    @property
    def M_w_D(self):
        return self.X[:, 2]

    @property
    def M_s_R(self):
        return self.X[:, 3:3 + self.n]

    @property
    def M_w_R(self):
        return self.X[:, 3 + self.n:3 + 2 * self.n]

    @property
    def f_wstar(self):
        return self.X[:, 3 + 2 * self.n]

    @property
    def M_s_BW(self):
        return self.X[:, 4 + 2 * self.n]

    @property
    def delta(self):
        return self.derived[:, bc.DDELTA]

    @property
    def P_dot(self):
        return self.derived[:, bc.DP_DOT]

    @property
    def f_s(self):
        return self.sections[:, bc.SF_S, -1]

    @property
    def f_w(self):
        return self.sections[:, bc.SF_W, -1]

    @property
    def f_ell(self):
        return self.derived[:, bc.DF_ELL]

    @property
    def alpha(self):
        return self.sections[:, bc.SALPHA, :]

    @property
    def q_s(self):
        return self.inputs[:, 0]

    @property
    def q_f(self):
        return self.inputs[:, 1]

    @property
    def Q_T(self):
        return self.inputs[:, 2]

    @property
    def total_mass(self):
        return self.X[:, 1] + self.X[:, 2] + self.M_s_R.sum(axis=1) + self.M_w_R.sum(axis=1)

    def state_at(self, i: int) -> BoilerState:
        return BoilerState.from_vector(self.X[i], self.n)

    def mass_drift(self) -> np.ndarray:
        """Relative mismatch between stored mass change and integrated net inflow."""
        m0 = self.total_mass[0]
        return (self.total_mass - m0 - self.net_inflow) / m0

    def volume_closure(self) -> tuple[np.ndarray, np.ndarray]:
        """Relative drum (m,) and riser-section (m, n) volume residuals."""
        P = self.P
        sat = np.array([sp.saturation_kernel(p, TABLES.sat_x, TABLES.sat_c)[:2] for p in P])
        rho_w, rho_s = sat[:, 0], sat[:, 1]
        V_D = self.params.V_D
        drum = (self.M_w_D / rho_w + self.M_s_D / rho_s - V_D) / V_D
        V_i = self.params.V_R / self.n
        riser = (self.M_w_R / rho_w[:, None] + self.M_s_R / rho_s[:, None] - V_i) / V_i
        return drum, riser

    def columns(self) -> dict:
        n = self.n
        cols = {
            "t": self.t, "P": self.P, "delta": self.delta, "f_wstar": self.f_wstar,
            "f_s": self.f_s, "f_w": self.f_w, "f_ell": self.f_ell,
            "Q_H": self.derived[:, bc.DQ_H], "Q_B": self.derived[:, bc.DQ_B],
            "M_s_BW": self.M_s_BW,
        }
        for i in range(n):
            cols[f"alpha_{i + 1}"] = self.alpha[:, i]
        cols.update({"q_s": self.q_s, "q_f": self.q_f, "Q_T": self.Q_T, "P_dot": self.P_dot,
                     "a": self.derived[:, bc.DA], "omega": self.derived[:, bc.DOMEGA],
                     "M_s_D": self.M_s_D, "M_w_D": self.M_w_D})
        for i in range(n):
            cols[f"M_s_R_{i + 1}"] = self.M_s_R[:, i]
        for i in range(n):
            cols[f"M_w_R_{i + 1}"] = self.M_w_R[:, i]
        if self.has_superheater:
            cols.update({"M_SH": self.plant[:, 0], "h_SH": self.plant[:, 1],
                         "P_SH": self.plant[:, 2]})
        if self.has_receiver:
            cols.update({"M_E": self.plant[:, 3], "h_E": self.plant[:, 4],
                         "P_E": self.plant[:, 5]})
        return cols

    def to_csv(self, path=None) -> str:
        """Write one row per sample; returns the text (also written to `path`)."""
        cols = self.columns()
        buf = io.StringIO()
        buf.write(",".join(cols) + "\n")
        data = np.column_stack(list(cols.values()))
        np.savetxt(buf, data, delimiter=",", fmt="%.12e")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


# --------------------------------------------------------------------------
# integration kernel


@njit(cache=True)
def _plant_rhs(y, P_drum, q_s, sh_qout, rcv_qout, has_sh, has_rcv, sh_V, sh_Q, rcv_V,
               n_boilers, tables, dy, qin, hin):
    h_drum = sp.saturation_kernel(P_drum, tables.sat_x, tables.sat_c)[3]
    q_next = q_s
    h_next = h_drum
    dy[:] = 0.0
    if has_sh:
        P = y[2]
        if not (sp.P_MIN <= P <= sp.P_MAX):
            return SH_P_RANGE
        dM, dh, dP, sup = superheater_kernel(y[0], y[1], P, sh_V, sh_Q, q_s, h_drum,
                                             sh_qout, tables)
        if sup < -WET_TOLERANCE or sup > tables.sh_y[-1]:
            return SH_SUPERHEAT
        dy[0] = dM
        dy[1] = dh
        dy[2] = dP
        q_next = sh_qout
        h_next = y[1]
    if has_rcv:
        P = y[5]
        if not (sp.P_MIN <= P <= sp.P_MAX):
            return RCV_P_RANGE
        qin[0] = n_boilers * q_next
        hin[0] = h_next
        dM, dh, dP, sup = receiver_kernel(y[3], y[4], P, rcv_V, qin, hin, rcv_qout, tables)
        if sup < -WET_TOLERANCE or sup > tables.sh_y[-1]:
            return RCV_SUPERHEAT
        dy[3] = dM
        dy[4] = dh
        dy[5] = dP
    return 0


@njit(cache=True)
def _integrate(x0, y0, par, tables, qs, qf, QT, sh_qout, rcv_qout, dt, n_steps, stride,
               omega_on, buf, has_sh, has_rcv, sh_V, sh_Q, rcv_V, n_boilers,
               rec_x, rec_y, rec_der, rec_sec, rec_in, rec_net, counters):
    """RK4 loop. Inputs are sampled on the half-step grid (index 2k = t_k).

    Returns (status, failing step, failing state). counters[0] counts delay
    caps at step boundaries; counters[1] counts plant samples below saturation.
    """
    nx = len(x0)
    n = (nx - 5) // 2
    x = x0.copy()
    y = y0.copy()
    k1 = np.empty(nx)
    k2 = np.empty(nx)
    k3 = np.empty(nx)
    k4 = np.empty(nx)
    xs = np.empty(nx)
    l1 = np.zeros(N_PLANT)
    l2 = np.zeros(N_PLANT)
    l3 = np.zeros(N_PLANT)
    l4 = np.zeros(N_PLANT)
    ys = np.empty(N_PLANT)
    der = np.empty(bc.N_DER)
    der_s = np.empty(bc.N_DER)
    sec = np.empty((4, n))
    sec_s = np.empty((4, n))
    qin = np.empty(1)
    hin = np.empty(1)
    size = len(buf)
    head = 0
    fw_prev = 0.0
    fs_prev = 0.0
    net = 0.0
    r = 0
    for k in range(n_steps + 1):
        j = 2 * k
        # boundary flows, then history/difference updates
        st = bc.rhs_kernel(x, par, tables, qs[j], qf[j], QT[j], False, 0.0, 0.0,
                           buf, head, dt, 0.0, k1, der, sec)
        if st != 0:
            return st, k, x
        f_s = sec[bc.SF_S, n - 1]
        f_w = sec[bc.SF_W, n - 1]
        if k > 0:
            head = (head + 1) % size
            buf[head] = f_s
            fw_dot = (f_w - fw_prev) / dt
            fs_dot = (f_s - fs_prev) / dt
        else:
            buf[head] = f_s
            fw_dot = 0.0
            fs_dot = 0.0
        fw_prev = f_w
        fs_prev = f_s
        st = bc.rhs_kernel(x, par, tables, qs[j], qf[j], QT[j], omega_on, fw_dot, fs_dot,
                           buf, head, dt, 0.0, k1, der, sec)
        if st != 0:
            return st, k, x
        if der[bc.DCAPPED] > 0.0:
            counters[0] += 1
        if has_sh or has_rcv:
            st = _plant_rhs(y, x[0], qs[j], sh_qout[j], rcv_qout[j], has_sh, has_rcv,
                            sh_V, sh_Q, rcv_V, n_boilers, tables, l1, qin, hin)
            if st != 0:
                return st, k, x
        if k % stride == 0:
            rec_x[r, :] = x
            rec_y[r, :] = y
            rec_der[r, :] = der
            rec_sec[r, :, :] = sec
            rec_in[r, 0] = qs[j]
            rec_in[r, 1] = qf[j]
            rec_in[r, 2] = QT[j]
            rec_net[r] = net
            r += 1
        if k == n_steps:
            break

        h = 0.5 * dt
        for i in range(nx):
            xs[i] = x[i] + h * k1[i]
        for i in range(N_PLANT):
            ys[i] = y[i] + h * l1[i]
        st = bc.rhs_kernel(xs, par, tables, qs[j + 1], qf[j + 1], QT[j + 1], omega_on,
                           fw_dot, fs_dot, buf, head, dt, h, k2, der_s, sec_s)
        if st != 0:
            return st, k, xs
        if has_sh or has_rcv:
            st = _plant_rhs(ys, xs[0], qs[j + 1], sh_qout[j + 1], rcv_qout[j + 1], has_sh,
                            has_rcv, sh_V, sh_Q, rcv_V, n_boilers, tables, l2, qin, hin)
            if st != 0:
                return st, k, xs
        for i in range(nx):
            xs[i] = x[i] + h * k2[i]
        for i in range(N_PLANT):
            ys[i] = y[i] + h * l2[i]
        st = bc.rhs_kernel(xs, par, tables, qs[j + 1], qf[j + 1], QT[j + 1], omega_on,
                           fw_dot, fs_dot, buf, head, dt, h, k3, der_s, sec_s)
        if st != 0:
            return st, k, xs
        if has_sh or has_rcv:
            st = _plant_rhs(ys, xs[0], qs[j + 1], sh_qout[j + 1], rcv_qout[j + 1], has_sh,
                            has_rcv, sh_V, sh_Q, rcv_V, n_boilers, tables, l3, qin, hin)
            if st != 0:
                return st, k, xs
        for i in range(nx):
            xs[i] = x[i] + dt * k3[i]
        for i in range(N_PLANT):
            ys[i] = y[i] + dt * l3[i]
        st = bc.rhs_kernel(xs, par, tables, qs[j + 2], qf[j + 2], QT[j + 2], omega_on,
                           fw_dot, fs_dot, buf, head, dt, dt, k4, der_s, sec_s)
        if st != 0:
            return st, k, xs
        if has_sh or has_rcv:
            st = _plant_rhs(ys, xs[0], qs[j + 2], sh_qout[j + 2], rcv_qout[j + 2], has_sh,
                            has_rcv, sh_V, sh_Q, rcv_V, n_boilers, tables, l4, qin, hin)
            if st != 0:
                return st, k, xs
        for i in range(nx):
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        for i in range(N_PLANT):
            y[i] += dt / 6.0 * (l1[i] + 2.0 * l2[i] + 2.0 * l3[i] + l4[i])
        net += dt / 6.0 * ((qf[j] - qs[j]) + 4.0 * (qf[j + 1] - qs[j + 1])
                           + (qf[j + 2] - qs[j + 2]))
        if has_sh or has_rcv:
            if has_sh and y[1] < sp.saturation_kernel(y[2], tables.sat_x, tables.sat_c)[3]:
                counters[1] += 1
            if has_rcv and y[4] < sp.saturation_kernel(y[5], tables.sat_x, tables.sat_c)[3]:
                counters[1] += 1
    return 0, n_steps, x


# --------------------------------------------------------------------------


def _status_error(status: int, x, n: int):
    if status > 0:
        return DryoutError(status, float(x[3 + n + status - 1]))
    if status <= bc.COLLAPSED:
        section = bc.COLLAPSED - status
        return CollapseError(section, float(x[3 + section - 1]))
    if status == bc.SINGULAR:
        return SingularPressureError("pressure equation denominator vanished")
    if status in (bc.P_LOW, bc.P_HIGH):
        return PropertyRangeError(f"drum pressure {x[0]:.6g} Pa outside [{sp.P_MIN}, {sp.P_MAX}]")
    messages = {SH_P_RANGE: "superheater pressure outside table range",
                SH_SUPERHEAT: "superheater state left the superheated table",
                RCV_P_RANGE: "receiver pressure outside table range",
                RCV_SUPERHEAT: "receiver state left the superheated table"}
    cls = PhaseError if status in (SH_SUPERHEAT, RCV_SUPERHEAT) else PropertyRangeError
    return cls(messages.get(status, f"kernel status {status}"))


def initialize(scenario: Scenario):
    """Steady state, friction calibration and resolved input profiles."""
    params = scenario.params
    if scenario.circulation_ratio is not None:
        params = bc.calibrate_friction(params, scenario.q_s_nominal, scenario.P_target,
                                       scenario.circulation_ratio)
    state, inputs = bc.steady_state(params, scenario.q_s_nominal, scenario.P_target)
    return params, state, inputs


def leading_eigenvalue(state: BoilerState, inputs: BoilerInputs, params: BoilerParams) -> complex:
    """Largest-magnitude eigenvalue of the boiler Jacobian (central differences, no Omega)."""
    x0 = state.to_vector()
    n = params.n

    def f(x):
        d, _ = bc.state_derivative(BoilerState.from_vector(x, n, state.delay_buffer), inputs,
                                   params, omega_enabled=False)
        return d.to_vector()

    J = np.empty((len(x0), len(x0)))
    for i in range(len(x0)):
        h = 1e-6 * max(abs(x0[i]), 1.0)
        xp = x0.copy()
        xm = x0.copy()
        xp[i] += h
        xm[i] -= h
        J[:, i] = (f(xp) - f(xm)) / (2.0 * h)
    ev = np.linalg.eigvals(J)
    return complex(ev[np.argmax(np.abs(ev))])


def max_stable_dt(state: BoilerState, inputs: BoilerInputs, params: BoilerParams) -> float:
    """Largest RK4 step that keeps the fastest (real) mode stable at this state."""
    lam = leading_eigenvalue(state, inputs, params)
    return RK4_REAL_LIMIT / abs(lam)


def _sample(profile: Profile | None, nominal: float, grid: np.ndarray, name: str):
    if profile is None:
        return np.full(len(grid), float(nominal))
    values = profile.resolve(nominal)(grid)
    if np.any(values < 0):
        raise ScenarioError(f"profile {name} takes negative values")
    return np.ascontiguousarray(values)


def run(scenario: Scenario) -> Trajectory:
    """Integrate a scenario from its steady state; deterministic."""
    scenario.validate()
    params, state0, inputs0 = initialize(scenario)
    n = params.n
    dt = float(scenario.dt)
    dt_limit = max_stable_dt(state0, inputs0, params)
    if dt > dt_limit:
        raise ScenarioError(f"integration.dt = {dt:g} s exceeds the explicit stability limit "
                            f"{dt_limit:.4g} s of the downcomer flow mode")
    n_steps = scenario.n_steps
    stride = int(scenario.record_stride)
    grid = np.arange(2 * n_steps + 3) * (0.5 * dt)
    qs = _sample(scenario.q_s, inputs0.q_s, grid, "q_s")
    if isinstance(scenario.q_f, str):
        if scenario.q_f != "q_s":
            raise ScenarioError(f"profiles.q_f: unknown alias {scenario.q_f!r}")
        qf = qs
    else:
        qf = _sample(scenario.q_f, inputs0.q_f, grid, "q_f")
    QT = _sample(scenario.Q_T, inputs0.Q_T, grid, "Q_T")

    plant = scenario.plant or PlantConfig()
    sh = plant.superheater
    rcv = plant.receiver
    y0 = np.zeros(N_PLANT)
    sh_qout = qs
    sh_V = sh_Q = rcv_V = 1.0
    n_boilers = 1.0
    sat0 = sp.saturation_at(state0.P)
    h_out = sat0.h_s
    if sh is not None:
        sh_V, sh_Q = float(sh.V), float(sh.Q)
        h_sh = sat0.h_s + sh_Q / inputs0.q_s
        y0[0:3] = (sh_V * sp.superheated_at(state0.P, h_sh).rho, h_sh, state0.P)
        if sh.q_out is not None:
            sh_qout = _sample(sh.q_out, inputs0.q_s, grid, "plant.superheater.q_out")
        h_out = h_sh
    rcv_qout = sh_qout
    if rcv is not None:
        rcv_V = float(rcv.V)
        n_boilers = float(rcv.n_boilers)
        y0[3:6] = (rcv_V * sp.superheated_at(state0.P, h_out).rho, h_out, state0.P)
        if rcv.q_out is None:
            rcv_qout = n_boilers * sh_qout
        else:
            rcv_qout = _sample(rcv.q_out, n_boilers * inputs0.q_s, grid, "plant.receiver.q_out")

    m = n_steps // stride + 1
    rec_x = np.zeros((m, 2 * n + 5))
    rec_y = np.zeros((m, N_PLANT))
    rec_der = np.zeros((m, bc.N_DER))
    rec_sec = np.zeros((m, 4, n))
    rec_in = np.zeros((m, 3))
    rec_net = np.zeros(m)
    counters = np.zeros(2, dtype=np.int64)
    buf = np.full(int(math.ceil(params.a_max / dt)) + 2, inputs0.q_s)

    status, k, x_fail = _integrate(
        state0.to_vector(), y0, params.packed(), TABLES, qs, qf, QT,
        np.ascontiguousarray(sh_qout), np.ascontiguousarray(rcv_qout), dt, n_steps, stride,
        bool(scenario.omega_enabled), buf, sh is not None, rcv is not None, sh_V, sh_Q,
        rcv_V, n_boilers, rec_x, rec_y, rec_der, rec_sec, rec_in, rec_net, counters)
    if status != 0:
        cause = _status_error(status, x_fail, n)
        snapshot = BoilerState.from_vector(x_fail, n)
        raise SimulationError(f"{type(cause).__name__}: {cause}", k * dt, snapshot) from cause

    return Trajectory(
        t=np.arange(m) * (stride * dt), X=rec_x, derived=rec_der, sections=rec_sec,
        inputs=rec_in, net_inflow=rec_net,
        plant=rec_y if (sh is not None or rcv is not None) else None,
        params=params, initial_inputs=inputs0,
        diagnostics={"delay_caps": int(counters[0]), "plant_wet_samples": int(counters[1]),
                     "steps": n_steps, "dt_stability_limit": dt_limit},
        has_superheater=sh is not None, has_receiver=rcv is not None)


def convergence_check(scenario: Scenario, dt_list) -> list[dict]:
    """Self-convergence table over successively halved step sizes.

    Each row compares the run at dt[i+1] with the run at dt[i] on the coarse
    recording grid (max-norm of delta and P differences) and reports the
    observed order from consecutive rows.
    """
    dts = [float(d) for d in dt_list]
    if len(dts) < 2:
        raise ScenarioError("convergence check needs at least two step sizes")
    for a, b in zip(dts, dts[1:]):
        if not math.isclose(b, a / 2.0, rel_tol=1e-9):
            raise ScenarioError(f"step sizes must halve successively: {a} -> {b}")
    # one common recording interval: multiple of the coarsest dt
    interval = scenario.record_stride * scenario.dt
    stride0 = max(1, round(interval / dts[0]))
    runs = []
    for i, d in enumerate(dts):
        sc = replace(scenario, dt=d, record_stride=stride0 * 2 ** i)
        runs.append(run(sc))
    rows = []
    for i in range(1, len(runs)):
        a, b = runs[i - 1], runs[i]
        m = min(len(a.t), len(b.t))
        e_delta = float(np.max(np.abs(a.delta[:m] - b.delta[:m])))
        e_P = float(np.max(np.abs(a.P[:m] - b.P[:m])))
        rows.append({"dt_coarse": dts[i - 1], "dt_fine": dts[i], "max_delta_diff": e_delta,
                     "max_P_diff": e_P, "max_abs_delta": float(np.max(np.abs(b.delta[:m]))),
                     "order": None})
    for i in range(1, len(rows)):
        e0, e1 = rows[i - 1]["max_delta_diff"], rows[i]["max_delta_diff"]
        if e0 > 0 and e1 > 0:
            rows[i]["order"] = math.log2(e0 / e1)
    return rows


# --------------------------------------------------------------------------
# scenario files


def scenario_schema() -> dict:
    with resources.files("boilersim.schema").joinpath("scenario.schema.json").open() as fh:
        return json.load(fh)


def builtin_scenarios() -> list[str]:
    root = resources.files("boilersim.scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def builtin_scenario_dict(name: str) -> dict:
    root = resources.files("boilersim.scenarios")
    path = root.joinpath(f"{name}.json")
    if not path.is_file():
        raise ScenarioError(f"no built-in scenario {name!r}; have {', '.join(builtin_scenarios())}")
    return json.loads(path.read_text())


def schema_keys(schema: dict | None = None) -> list[str]:
    """Dotted keys accepted by scenario files and --set overrides."""
    schema = schema or scenario_schema()
    keys = []

    def walk(node, prefix):
        for key, sub in node.get("properties", {}).items():
            dotted = f"{prefix}{key}"
            if "properties" in sub:
                walk(sub, dotted + ".")
            else:
                keys.append(dotted)

    walk(schema, "")
    return keys


def parse_override(text: str) -> tuple[str, object]:
    """Split KEY=VALUE; VALUE is parsed as JSON when possible."""
    if "=" not in text:
        raise ScenarioError(f"override {text!r} is not KEY=VALUE")
    key, raw = text.split("=", 1)
    key = key.strip()
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def apply_overrides(doc: dict, overrides) -> dict:
    """Return a copy of a scenario document with dotted-key overrides applied."""
    doc = copy.deepcopy(doc)
    valid = set(schema_keys())
    for item in overrides or ():
        key, value = parse_override(item) if isinstance(item, str) else item
        if key not in valid and not any(key.startswith(v + ".") for v in valid):
            raise ScenarioError(f"override key {key!r} is not a scenario schema key")
        parts = key.split(".")
        node = doc
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ScenarioError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = value
    return doc


def _profile(entry, base_dir: Path | None, name: str) -> Profile | None:
    if entry is None:
        return None
    if isinstance(entry, (int, float)):
        return Profile.constant(entry)
    relative = bool(entry.get("relative", False))
    if "csv" in entry:
        path = Path(entry["csv"])
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        if not path.exists():
            raise ScenarioError(f"{name}: profile file {path} not found")
        return Profile.from_csv(path, relative)
    if len(entry["t"]) != len(entry["value"]):
        raise ScenarioError(f"{name}: t and value have different lengths")
    return Profile(entry["t"], entry["value"], relative)


def scenario_from_dict(doc: dict, base_dir=None) -> Scenario:
    """Validate a scenario document against the schema and build a Scenario."""
    try:
        jsonschema.validate(doc, scenario_schema())
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"scenario schema violation at {where}: {exc.message}") from None
    base_dir = Path(base_dir) if base_dir is not None else None
    par = doc.get("params", {})
    known = {f.name for f in fields(BoilerParams)}
    params = BoilerParams(**{k: v for k, v in par.items() if k in known})
    init = doc.get("init", {})
    ratio = init.get("circulation_ratio")
    if ratio is None and not {"k_wstar", "k_w", "k_s"} & set(par) and _geometry_changed(par):
        # defaults were calibrated for the default geometry
        ratio = bc.DEFAULT_CIRCULATION_RATIO
    try:
        params.validate()
    except ValueError as exc:
        raise ScenarioError(f"params: {exc}") from None

    prof = doc.get("profiles", {})
    q_f = prof.get("q_f")
    plant = None
    if "plant" in doc:
        pd = doc["plant"]
        sh = rc = None
        if "superheater" in pd:
            d = pd["superheater"]
            sh = SuperheaterConfig(d.get("V", 5.0), d.get("Q", 2.0e6),
                                   _profile(d.get("q_out"), base_dir, "plant.superheater.q_out"))
        if "receiver" in pd:
            d = pd["receiver"]
            rc = ReceiverConfig(d.get("V", 20.0), d.get("n_boilers", 1),
                                _profile(d.get("q_out"), base_dir, "plant.receiver.q_out"))
        plant = PlantConfig(sh, rc)
    integ = doc.get("integration", {})
    sc = Scenario(
        params=params,
        q_s=_profile(prof.get("q_s"), base_dir, "profiles.q_s"),
        q_f=q_f if isinstance(q_f, str) else _profile(q_f, base_dir, "profiles.q_f"),
        Q_T=_profile(prof.get("Q_T"), base_dir, "profiles.Q_T"),
        t_end=float(integ.get("t_end", 100.0)),
        dt=float(integ.get("dt", 0.01)),
        record_stride=int(integ.get("record_stride", 10)),
        omega_enabled=bool(integ.get("omega_enabled", True)),
        P_target=float(init.get("P_target", bc.NOMINAL_PRESSURE)),
        q_s_nominal=float(init.get("q_s_nominal", bc.NOMINAL_STEAM_FLOW)),
        circulation_ratio=ratio,
        plant=plant,
        name=doc.get("name", "scenario"),
    )
    sc.validate()
    return sc


_GEOMETRY_KEYS = ("A_R", "V_R", "A_DC", "V_DC", "L_DC", "V_D", "A_D", "n", "g", "L_nom")


def _geometry_changed(par: dict) -> bool:
    default = BoilerParams()
    return any(k in par and par[k] != getattr(default, k) for k in _GEOMETRY_KEYS)


def load_scenario(source, overrides=()) -> Scenario:
    """Load a scenario from a JSON path or a built-in name, applying overrides."""
    path = Path(source)
    if path.suffix == ".json" or path.exists():
        if not path.exists():
            raise ScenarioError(f"scenario file {path} not found")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: invalid JSON ({exc})") from None
        base_dir = path.parent
    else:
        doc = builtin_scenario_dict(str(source))
        base_dir = None
    return scenario_from_dict(apply_overrides(doc, overrides), base_dir)
