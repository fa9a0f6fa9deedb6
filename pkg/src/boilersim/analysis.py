"""Post-processing studies over simulated trajectories.

* quality-ratio series abar_k = alpha_k / (k alpha_1)
* exact transport delay versus its first-order Pade filter
* proportionality of drum level to steam flow
* effect of the riser momentum rate on the level response
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
from scipy import signal

from . import boiler_core as bc
from . import steam_props as sp
from .errors import ScenarioError
from .sim_engine import Scenario, Trajectory, run

UNDEFINED_ALPHA = 1e-9


@dataclass
class AlphaRatioSeries:
    t: np.ndarray
    abar: np.ndarray  # (m, n); NaN where alpha_1 is below UNDEFINED_ALPHA
    undefined: np.ndarray  # (m,) bool

    def max_deviation(self, k: int, window=None) -> float:
        """max_t |abar_k - 1| over defined samples (k is 1-based)."""
        mask = ~self.undefined
        if window is not None:
            mask &= (self.t >= window[0]) & (self.t <= window[1])
        if not mask.any():
            return float("nan")
        return float(np.max(np.abs(self.abar[mask, k - 1] - 1.0)))

    def last_exceedance(self, k: int, threshold: float) -> float | None:
        """Latest sample time at which |abar_k - 1| exceeds `threshold`."""
        dev = np.abs(self.abar[:, k - 1] - 1.0)
        hits = np.nonzero((dev > threshold) & ~self.undefined)[0]
        return float(self.t[hits[-1]]) if len(hits) else None

    def to_csv(self, path):
        n = self.abar.shape[1]
        header = "t," + ",".join(f"abar_{k}" for k in range(1, n + 1))
        np.savetxt(path, np.column_stack([self.t, self.abar]), delimiter=",",
                   header=header, comments="", fmt="%.12e")


def alpha_ratio(traj: Trajectory) -> AlphaRatioSeries:
    n = traj.n
    if n < 2:
        raise ScenarioError("quality ratio needs at least two riser sections")
    alpha = traj.alpha
    a1 = alpha[:, 0]
    undefined = a1 < UNDEFINED_ALPHA
    k = np.arange(1, n + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        abar = alpha / (k[None, :] * a1[:, None])
    abar[undefined] = np.nan
    abar[~undefined, 0] = 1.0
    return AlphaRatioSeries(traj.t.copy(), abar, undefined)


# --------------------------------------------------------------------------


@dataclass
class PadeComparison:
    t: np.ndarray
    exact: np.ndarray
    pade: np.ndarray
    a: float
    max_abs: float
    rms: float
    rms_rel_range: float  # rms / (range of the exact signal)

    def summary(self) -> dict:
        return {"a": self.a, "max_abs": self.max_abs, "rms": self.rms,
                "rms_rel_range": self.rms_rel_range}

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.t, self.exact, self.pade]), delimiter=",",
                   header="t,M_s_BW_exact,M_s_BW_pade", comments="", fmt="%.12e")


def exact_delay_response(f_s, dt: float, a: float, M0: float | None = None) -> np.ndarray:
    """Integrate dM/dt = f_s(t) - f_s(t - a) by the trapezoid rule.

    f_s before the first sample is held at its first value. The default
    initial value is the equilibrium a * f_s[0].
    """
    f = np.asarray(f_s, dtype=np.float64)
    t = np.arange(len(f)) * dt
    lagged = np.interp(t - a, t, f, left=f[0])
    rate = f - lagged
    M = np.empty(len(f))
    M[0] = a * f[0] if M0 is None else M0
    M[1:] = M[0] + np.cumsum(0.5 * dt * (rate[1:] + rate[:-1]))
    return M


def pade_response(f_s, dt: float, a: float, M0: float | None = None) -> np.ndarray:
    """Output of the filter 2a/(2 + a s) driven by f_s (linear between samples)."""
    f = np.asarray(f_s, dtype=np.float64)
    t = np.arange(len(f)) * dt
    sys_ = signal.StateSpace([[-2.0 / a]], [[2.0]], [[1.0]], [[0.0]])
    x0 = a * f[0] if M0 is None else M0
    if len(f) == 1:
        return np.array([x0])
    _, y, _ = signal.lsim(sys_, f, t, X0=[x0])
    return np.asarray(y, dtype=np.float64)


def pade_delay_compare(f_s, dt: float, a: float) -> PadeComparison:
    """Compare the exact transport delay with its first-order Pade filter.

    `a` is held fixed (the nominal delay) for both models.
    """
    f = np.asarray(f_s, dtype=np.float64)
    if f.size == 0:
        raise ValueError("empty f_s series")
    if not (dt > 0 and a > 0):
        raise ValueError("dt and a must be positive")
    exact = exact_delay_response(f, dt, a)
    pade = pade_response(f, dt, a)
    diff = exact - pade
    rms = float(np.sqrt(np.mean(diff ** 2)))
    span = float(np.ptp(exact))
    rel = rms / span if span > 0 else (0.0 if rms == 0 else math.inf)
    return PadeComparison(np.arange(len(f)) * dt, exact, pade, float(a),
                          float(np.max(np.abs(diff))), rms, rel)


def settling_time(t, y, t0: float, fraction: float = 0.95, atol: float = 0.0) -> float | None:
    """Time after `t0` from which y stays within (1 - fraction) of its total change.

    With `fraction` = 1 the band is `atol` around the final value.
    """
    t = np.asarray(t)
    y = np.asarray(y)
    y0 = np.interp(t0, t, y)
    y_end = y[-1]
    band = abs(y_end - y0) * (1.0 - fraction) + atol
    outside = np.nonzero((np.abs(y - y_end) > band) & (t >= t0))[0]
    if len(outside) == 0:
        return 0.0
    i = outside[-1]
    if i + 1 >= len(t):
        return None
    return float(t[i + 1] - t0)


def pade_settling_theory(a: float, fraction: float = 0.95) -> float:
    """Settling time of the first-order Pade step response: (a/2) ln(1/(1-fraction))."""
    return 0.5 * a * math.log(1.0 / (1.0 - fraction))


# --------------------------------------------------------------------------


@dataclass
class PressureCoefficients:
    """Evaluated input coefficients of the pressure equation at one operating point."""

    P: float
    C3: float
    denominator: float
    q_s_coeff: float  # -1/rho_s
    q_f_coeff: float  # 1/rho_w - C3 (h_w_f - h_w)
    Q_T_coeff: float  # -C3
    lambda_1: float  # dP/dt per unit steam flow
    dominance_ratio: float


def pressure_coefficients(params: bc.BoilerParams, P: float = bc.NOMINAL_PRESSURE,
                          q_s: float = bc.NOMINAL_STEAM_FLOW) -> PressureCoefficients:
    """Coefficients at the steady state for (P, q_s); dominance is
    |1/rho_s| / max(|1/rho_w|, |C3 (h_w_f - h_w)|)."""
    state, _ = bc.steady_state(params, q_s, P)
    c = bc.coeffs(state.P, state, params)
    s = sp.saturation_at(state.P)
    den = c.C1 + c.C2 - c.C3 * (c.K1 + c.K2)
    feed_term = c.C3 * (params.h_w_f - s.h_w)
    ratio = (1.0 / s.rho_s) / max(1.0 / s.rho_w, abs(feed_term))
    return PressureCoefficients(
        P=state.P, C3=c.C3, denominator=den, q_s_coeff=-1.0 / s.rho_s,
        q_f_coeff=1.0 / s.rho_w - feed_term, Q_T_coeff=-c.C3,
        lambda_1=-1.0 / (s.rho_s * den), dominance_ratio=ratio)


@dataclass
class ProportionalityReport:
    correlation: float | None  # None when q_s or delta is constant
    dominance_ratio: float
    lambda_1: float
    coefficients: PressureCoefficients
    pade: PadeComparison | None = None

    def summary(self) -> dict:
        out = {"correlation": self.correlation, "dominance_ratio": self.dominance_ratio,
               "lambda_1": self.lambda_1, "coefficients": asdict(self.coefficients)}
        if self.pade is not None:
            out["pade"] = self.pade.summary()
        return out


def correlation(x, y) -> float | None:
    """Pearson correlation of mean-removed series; None if either is constant."""
    x = np.asarray(x, dtype=np.float64) - np.mean(x)
    y = np.asarray(y, dtype=np.float64) - np.mean(y)
    nx = np.sqrt(np.dot(x, x))
    ny = np.sqrt(np.dot(y, y))
    scale = max(np.max(np.abs(x), initial=0.0), np.max(np.abs(y), initial=0.0))
    if nx <= 1e-12 * max(scale, 1e-300) * math.sqrt(len(x)) or ny == 0 or nx == 0:
        return None
    if ny <= 1e-12 * scale * math.sqrt(len(y)):
        return None
    return float(np.dot(x, y) / (nx * ny))


def proportionality_report(traj: Trajectory, P_nominal: float | None = None,
                           with_pade: bool = True) -> ProportionalityReport:
    """Level/steam-flow correlation plus the pressure-equation coefficient dominance."""
    P0 = traj.P[0] if P_nominal is None else P_nominal
    coeff = pressure_coefficients(traj.params, P0, traj.initial_inputs.q_s)
    pade = None
    if with_pade and len(traj.t) > 1:
        a0 = float(traj.derived[0, bc.DA])
        pade = pade_delay_compare(traj.f_s, float(traj.t[1] - traj.t[0]), a0)
    return ProportionalityReport(correlation(traj.q_s, traj.delta), coeff.dominance_ratio,
                                 coeff.lambda_1, coeff, pade)


# --------------------------------------------------------------------------


@dataclass
class OmegaEffect:
    with_omega: Trajectory
    without_omega: Trajectory
    window: tuple[float, float]
    max_difference: float
    noise_floor: float
    peak_with: float
    peak_without: float

    @property
    def ratio(self) -> float:
        if self.noise_floor == 0:
            return math.inf if self.max_difference > 0 else 0.0
        return self.max_difference / self.noise_floor

    @property
    def significant(self) -> bool:
        return self.max_difference > 10.0 * self.noise_floor

    def summary(self) -> dict:
        return {"window": list(self.window), "max_difference": self.max_difference,
                "noise_floor": self.noise_floor, "ratio": self.ratio,
                "significant": self.significant, "peak_delta_with_omega": self.peak_with,
                "peak_delta_without_omega": self.peak_without}

    def to_csv(self, path):
        a, b = self.with_omega, self.without_omega
        np.savetxt(path, np.column_stack([a.t, a.delta, b.delta, a.delta - b.delta]),
                   delimiter=",", header="t,delta_omega,delta_no_omega,difference",
                   comments="", fmt="%.12e")


def spike_window(scenario: Scenario, tail: float = 60.0) -> tuple[float, float]:
    """From the first change in q_s to `tail` seconds after its last change."""
    prof = scenario.q_s
    if prof is None or len(prof.t) < 2:
        return (0.0, scenario.t_end)
    changes = np.nonzero(np.diff(prof.v) != 0)[0]
    if len(changes) == 0:
        return (0.0, scenario.t_end)
    start = float(prof.t[changes[0]])
    end = float(prof.t[changes[-1] + 1]) + tail
    return (start, min(end, scenario.t_end))


def _max_in_window(t, values, window):
    mask = (t >= window[0] - 1e-9) & (t <= window[1] + 1e-9)
    return float(np.max(np.abs(values[mask]))) if mask.any() else 0.0


def omega_effect(scenario: Scenario, window=None) -> OmegaEffect:
    """Run with and without the riser momentum rate and compare drum levels.

    The noise floor is the level change from halving dt in the run with the
    momentum rate, measured on the same samples and window.
    """
    window = spike_window(scenario) if window is None else tuple(window)
    on = run(replace(scenario, omega_enabled=True))
    off = run(replace(scenario, omega_enabled=False))
    fine = run(replace(scenario, omega_enabled=True, dt=scenario.dt / 2,
                       record_stride=2 * scenario.record_stride))
    m = min(len(on.t), len(fine.t))
    diff = _max_in_window(on.t, on.delta - off.delta, window)
    noise = _max_in_window(on.t[:m], on.delta[:m] - fine.delta[:m], window)
    return OmegaEffect(on, off, window, diff, noise,
                       _max_in_window(on.t, on.delta, window),
                       _max_in_window(off.t, off.delta, window))


def write_summary(path, summary: dict):
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True, default=float) + "\n")
