import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boilersim import steam_props as sp
from boilersim.errors import PhaseError, PropertyRangeError

pressures = st.floats(min_value=0.12e6, max_value=2.9e6)


class TestSaturationTable:
    # published IAPWS-IF97 saturation values
    @pytest.mark.parametrize("P, T_s, v_f, v_g, h_f, h_g", [
        (1.0e6, 453.03, 1.1272e-3, 0.19436, 762.68e3, 2777.1e3),
        (2.0e6, 485.53, 1.1767e-3, 0.099585, 908.50e3, 2798.3e3),
    ])
    def test_matches_published_values(self, P, T_s, v_f, v_g, h_f, h_g):
        s = sp.saturation_at(P)
        assert s.T_s == pytest.approx(T_s, rel=1e-4)
        assert 1 / s.rho_w == pytest.approx(v_f, rel=1e-3)
        assert 1 / s.rho_s == pytest.approx(v_g, rel=1e-3)
        assert s.h_w == pytest.approx(h_f, rel=1e-3)
        assert s.h_s == pytest.approx(h_g, rel=1e-3)

    def test_nominal_specific_volumes(self):
        s = sp.saturation_at(1.65e6)
        assert 1 / s.rho_w == pytest.approx(1.161e-3, rel=1e-3)
        # IF97 value; see the decisions ledger for the quoted 0.112
        assert 1 / s.rho_s == pytest.approx(0.1201, rel=1e-3)

    @given(pressures)
    @settings(max_examples=50, deadline=None)
    def test_derivatives_match_interpolant(self, P):
        h = 10.0
        a, b, c = sp.saturation_at(P - h), sp.saturation_at(P + h), sp.saturation_at(P)
        for name in ("rho_w", "rho_s", "h_w", "h_s", "T_s"):
            fd = (getattr(b, name) - getattr(a, name)) / (2 * h)
            assert getattr(c, f"d_{name}_dP") == pytest.approx(fd, rel=1e-4, abs=1e-12)

    @given(pressures)
    @settings(max_examples=50, deadline=None)
    def test_physical_signs(self, P):
        s = sp.saturation_at(P)
        assert s.rho_w > s.rho_s > 0
        assert s.h_s > s.h_w
        assert s.d_rho_w_dP < 0 < s.d_rho_s_dP
        assert s.d_T_s_dP > 0 and s.d_h_w_dP > 0

    @pytest.mark.parametrize("P, bound", [(0.05e6, "P_MIN"), (3.5e6, "P_MAX")])
    def test_out_of_range_names_bound(self, P, bound):
        with pytest.raises(PropertyRangeError, match=bound):
            sp.saturation_at(P)

    def test_nan_pressure_rejected(self):
        with pytest.raises(PropertyRangeError):
            sp.saturation_at(float("nan"))


class TestSuperheated:
    def test_matches_if97_point(self):
        s = sp.saturation_at(1.65e6)
        # IAPWS-IF97 region 2 density at 1.65 MPa, h_s + 200 kJ/kg
        assert sp.superheated_at(1.65e6, s.h_s + 2e5).rho == pytest.approx(6.7588649, rel=1e-5)

    def test_continuous_with_saturated_vapour(self):
        for P in (0.5e6, 1.65e6, 2.5e6):
            s = sp.saturation_at(P)
            assert sp.superheated_at(P, s.h_s).rho == pytest.approx(s.rho_s, rel=1e-4)

    @given(pressures, st.floats(min_value=1e3, max_value=5.9e5))
    @settings(max_examples=60, deadline=None)
    def test_partials_consistent(self, P, y):
        h = sp.saturation_at(P).h_s + y
        c = sp.superheated_at(P, h)
        assert c.rho > 0
        assert c.d_rho_dh < 0 < c.d_rho_dP
        dh, dP = 1.0, 10.0
        fd_h = (sp.superheated_at(P, h + dh).rho - sp.superheated_at(P, h - dh).rho) / (2 * dh)
        fd_P = (sp.superheated_at(P + dP, h).rho - sp.superheated_at(P - dP, h).rho) / (2 * dP)
        assert c.d_rho_dh == pytest.approx(fd_h, rel=1e-3)
        assert c.d_rho_dP == pytest.approx(fd_P, rel=1e-3)

    def test_wet_state_rejected(self):
        s = sp.saturation_at(1e6)
        with pytest.raises(PhaseError):
            sp.superheated_at(1e6, s.h_s - 1e4)

    def test_beyond_table_rejected(self):
        s = sp.saturation_at(1e6)
        with pytest.raises(PropertyRangeError):
            sp.superheated_at(1e6, s.h_s + 7e5)


class TestTables:
    def test_tables_are_monotone_grids(self):
        t = sp.TABLES
        assert np.all(np.diff(t.sat_x) > 0)
        assert t.sat_x[0] <= sp.P_MIN and t.sat_x[-1] >= sp.P_MAX
        assert np.all(np.diff(t.sh_y) > 0) and t.sh_y[0] == 0
