"""Saturated and superheated water/steam properties from bundled tables.

Saturation properties are monotone cubic (PCHIP) interpolants in pressure;
the pressure partials are the analytic derivatives of those interpolants.
Superheated density uses a bicubic Hermite patch over (P, h - h_s(P)), which
keeps the saturated-vapour boundary on a grid line.

Table assets live in ``boilersim/data``:

``saturation.csv``
    columns ``P,rho_w,rho_s,h_w,h_s,T_s`` (Pa, kg/m3, J/kg, K), P ascending.
``superheated.csv``
    columns ``P,h,rho``. Rows are grouped by P (ascending); within each group
    the first row is saturated vapour and the superheat offsets ``h - h_s``
    are the same for every group.

The ``*_kernel`` functions are numba-compiled and are what the simulator
calls on its hot path; the public functions add range checking.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import NamedTuple

import numpy as np
from numba import njit
from scipy.interpolate import PchipInterpolator

from .errors import PhaseError, PropertyRangeError

P_MIN = 0.1e6
P_MAX = 3.0e6

# index of each saturation property in the packed coefficient array
RHO_W, RHO_S, H_W, H_S, T_S = range(5)


class SteamTables(NamedTuple):
    sat_x: np.ndarray  # (m,) pressure nodes
    sat_c: np.ndarray  # (5, 4, m-1) local cubic coefficients
    sh_x: np.ndarray  # (mp,) pressure nodes
    sh_y: np.ndarray  # (md,) superheat offsets h - h_s
    sh_f: np.ndarray  # (mp, md) density
    sh_fx: np.ndarray
    sh_fy: np.ndarray
    sh_fxy: np.ndarray


@dataclass(frozen=True)
class SaturationProps:
    P: float
    rho_w: float
    rho_s: float
    h_w: float
    h_s: float
    T_s: float
    d_rho_w_dP: float
    d_rho_s_dP: float
    d_h_w_dP: float
    d_h_s_dP: float
    d_T_s_dP: float


@dataclass(frozen=True)
class SuperheatedProps:
    P: float
    h: float
    rho: float
    d_rho_dh: float
    d_rho_dP: float


def _read_csv(name):
    with resources.files("boilersim.data").joinpath(name).open("r") as fh:
        return np.loadtxt(fh, delimiter=",", skiprows=1)


def load_tables() -> SteamTables:
    sat = _read_csv("saturation.csv")
    P = sat[:, 0]
    pchip = PchipInterpolator(P, sat[:, 1:], axis=0)
    # scipy layout is (4, m-1, 5); kernels want (5, 4, m-1)
    sat_c = np.ascontiguousarray(np.transpose(pchip.c, (2, 0, 1)))

    sh = _read_csv("superheated.csv")
    sh_x = np.unique(sh[:, 0])
    md = len(sh) // len(sh_x)
    if md * len(sh_x) != len(sh):
        raise ValueError("superheated.csv is not a regular (P, superheat) grid")
    h = sh[:, 1].reshape(len(sh_x), md)
    f = sh[:, 2].reshape(len(sh_x), md)
    sh_y = h[0] - h[0, 0]
    if not np.allclose(h - h[:, :1], sh_y, rtol=0, atol=1e-3):
        raise ValueError("superheat offsets differ between pressure groups")
    fx = PchipInterpolator(sh_x, f, axis=0).derivative()(sh_x)
    fy = PchipInterpolator(sh_y, f, axis=1).derivative()(sh_y)
    fxy = PchipInterpolator(sh_x, fy, axis=0).derivative()(sh_x)
    return SteamTables(
        P.copy(), sat_c, sh_x, np.ascontiguousarray(sh_y),
        np.ascontiguousarray(f), np.ascontiguousarray(fx),
        np.ascontiguousarray(fy), np.ascontiguousarray(fxy),
    )


TABLES = load_tables()


@njit(cache=True)
def _interval(x, v):
    i = np.searchsorted(x, v, side="right") - 1
    if i < 0:
        i = 0
    elif i > len(x) - 2:
        i = len(x) - 2
    return i


@njit(cache=True)
def saturation_kernel(P, sat_x, sat_c):
    """Return (rho_w, rho_s, h_w, h_s, T_s, and their five P-partials)."""
    i = _interval(sat_x, P)
    s = P - sat_x[i]
    v = np.empty(5)
    d = np.empty(5)
    for k in range(5):
        c0 = sat_c[k, 0, i]
        c1 = sat_c[k, 1, i]
        c2 = sat_c[k, 2, i]
        c3 = sat_c[k, 3, i]
        v[k] = ((c0 * s + c1) * s + c2) * s + c3
        d[k] = (3.0 * c0 * s + 2.0 * c1) * s + c2
    return v[0], v[1], v[2], v[3], v[4], d[0], d[1], d[2], d[3], d[4]


@njit(cache=True)
def _hermite(t):
    t2 = t * t
    t3 = t2 * t
    return (2.0 * t3 - 3.0 * t2 + 1.0, t3 - 2.0 * t2 + t,
            -2.0 * t3 + 3.0 * t2, t3 - t2)


@njit(cache=True)
def _hermite_d(t):
    t2 = t * t
    return (6.0 * t2 - 6.0 * t, 3.0 * t2 - 4.0 * t + 1.0,
            -6.0 * t2 + 6.0 * t, 3.0 * t2 - 2.0 * t)


@njit(cache=True)
def superheated_kernel(P, h, tables):
    """Return (rho, d_rho_dh, d_rho_dP, superheat) at (P, h)."""
    sat = saturation_kernel(P, tables.sat_x, tables.sat_c)
    h_s = sat[H_S]
    dhs_dP = sat[5 + H_S]
    y = h - h_s
    xs = tables.sh_x
    ys = tables.sh_y
    i = _interval(xs, P)
    j = _interval(ys, y)
    hx = xs[i + 1] - xs[i]
    hy = ys[j + 1] - ys[j]
    t = (P - xs[i]) / hx
    u = (y - ys[j]) / hy
    a00, a10, a01, a11 = _hermite(t)
    da00, da10, da01, da11 = _hermite_d(t)
    b00, b10, b01, b11 = _hermite(u)
    db00, db10, db01, db11 = _hermite_d(u)
    A = (a00, a01)
    Ab = (a10, a11)
    dA = (da00, da01)
    dAb = (da10, da11)
    B = (b00, b01)
    Bb = (b10, b11)
    dB = (db00, db01)
    dBb = (db10, db11)
    f = 0.0
    ft = 0.0
    fu = 0.0
    for a in range(2):
        for b in range(2):
            F = tables.sh_f[i + a, j + b]
            Fx = tables.sh_fx[i + a, j + b] * hx
            Fy = tables.sh_fy[i + a, j + b] * hy
            Fxy = tables.sh_fxy[i + a, j + b] * hx * hy
            f += F * A[a] * B[b] + Fx * Ab[a] * B[b] + Fy * A[a] * Bb[b] + Fxy * Ab[a] * Bb[b]
            ft += F * dA[a] * B[b] + Fx * dAb[a] * B[b] + Fy * dA[a] * Bb[b] + Fxy * dAb[a] * Bb[b]
            fu += F * A[a] * dB[b] + Fx * Ab[a] * dB[b] + Fy * A[a] * dBb[b] + Fxy * Ab[a] * dBb[b]
    d_rho_dy = fu / hy
    d_rho_dx = ft / hx
    # h fixed: y moves with h_s(P)
    return f, d_rho_dy, d_rho_dx - d_rho_dy * dhs_dP, y


def check_pressure(P: float) -> None:
    if not np.isfinite(P):
        raise PropertyRangeError(f"pressure {P!r} is not finite")
    if P < P_MIN:
        raise PropertyRangeError(f"pressure {P:.6g} Pa below lower bound P_MIN = {P_MIN:.6g} Pa")
    if P > P_MAX:
        raise PropertyRangeError(f"pressure {P:.6g} Pa above upper bound P_MAX = {P_MAX:.6g} Pa")


def saturation_at(P: float, tables: SteamTables = TABLES) -> SaturationProps:
    """Saturated water/steam properties and their pressure partials at `P` [Pa]."""
    P = float(P)
    check_pressure(P)
    v = saturation_kernel(P, tables.sat_x, tables.sat_c)
    return SaturationProps(P, *(float(x) for x in v))


def superheated_at(P: float, h: float, tables: SteamTables = TABLES) -> SuperheatedProps:
    """Superheated-steam density and partials at pressure `P` [Pa], enthalpy `h` [J/kg].

    Raises PhaseError below the saturated-vapour enthalpy and
    PropertyRangeError outside the tabulated superheat band.
    """
    P = float(P)
    h = float(h)
    check_pressure(P)
    rho, d_rho_dh, d_rho_dP, y = superheated_kernel(P, h, tables)
    if y < 0.0:
        raise PhaseError(f"h = {h:.6g} J/kg is below saturated-vapour enthalpy at P = {P:.6g} Pa")
    if y > tables.sh_y[-1]:
        raise PropertyRangeError(
            f"superheat {y:.6g} J/kg above table bound {tables.sh_y[-1]:.6g} J/kg")
    return SuperheatedProps(P, h, float(rho), float(d_rho_dh), float(d_rho_dP))
