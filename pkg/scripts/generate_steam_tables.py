"""Regenerate the bundled steam-table CSV assets from IAPWS-IF97.

Needs the ``iapws`` package (dev-only, not a runtime dependency)::

    pip install iapws
    python scripts/generate_steam_tables.py
"""

from pathlib import Path

import numpy as np
from iapws import IAPWS97

DATA = Path(__file__).resolve().parents[1] / "src" / "boilersim" / "data"

P_MIN, P_MAX = 0.1e6, 3.0e6
N_SAT = 120
N_SH_P = 30
SUPERHEAT_DH = np.arange(0.0, 6.0e5 + 1.0, 5.0e4)


def saturation_rows():
    for P in np.geomspace(P_MIN, P_MAX, N_SAT):
        w = IAPWS97(P=P / 1e6, x=0.0)
        s = IAPWS97(P=P / 1e6, x=1.0)
        yield (P, 1.0 / w.v, 1.0 / s.v, w.h * 1e3, s.h * 1e3, w.T)


def superheated_rows():
    for P in np.geomspace(P_MIN, P_MAX, N_SH_P):
        s = IAPWS97(P=P / 1e6, x=1.0)
        h_sat = s.h * 1e3
        for dh in SUPERHEAT_DH:
            if dh == 0.0:
                rho = 1.0 / s.v
            else:
                rho = IAPWS97(P=P / 1e6, h=(h_sat + dh) / 1e3).rho
            yield (P, h_sat + dh, rho)


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    sat = np.array(list(saturation_rows()))
    np.savetxt(DATA / "saturation.csv", sat, delimiter=",", fmt="%.10e",
               header="P,rho_w,rho_s,h_w,h_s,T_s", comments="")
    sh = np.array(list(superheated_rows()))
    np.savetxt(DATA / "superheated.csv", sh, delimiter=",", fmt="%.10e",
               header="P,h,rho", comments="")
    print(f"wrote {len(sat)} saturation rows, {len(sh)} superheated rows to {DATA}")


if __name__ == "__main__":
    main()
