import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nanofluxonium.circuit import build_two_mode_hamiltonian
from nanofluxonium.constants import el_to_inductance
from nanofluxonium.errors import ParameterError
from nanofluxonium.nanowire import (
    CircuitTopology,
    NanowireGeometry,
    antisymmetric,
    build_ladder,
    converged_modes,
    kinetic_inductance,
    normal_modes,
    reduce_to_modes,
    reduce_topology,
    sheet_density_from_inductance,
    sheet_inductance,
)
from nanofluxonium.spectra import diagonalize

GEOM1 = NanowireGeometry(730e-6, 110e-9, 15e-9)
GEOM2 = NanowireGeometry(730e-6, 40e-9, 15e-9)
GEOM3 = NanowireGeometry(630e-6, 100e-9, 10e-9)
DEVICE1_TOPO = CircuitTopology.from_impedance(121e-9, 1850.0, c_0=20e-15, c_j=4e-15)


def with_ns(g, n_s):
    return NanowireGeometry(g.length, g.width, g.thickness, n_s)


class TestKinetic:
    @given(st.floats(1e-5, 1e-3), st.floats(2e-8, 2e-7), st.floats(5e-9, 5e-8), st.floats(1e24, 1e27))
    def test_geometry_scaling(self, length, width, thickness, n_s):
        base = kinetic_inductance(NanowireGeometry(length, width, thickness, n_s))
        longer = kinetic_inductance(NanowireGeometry(2 * length, width, thickness, n_s))
        wider = kinetic_inductance(NanowireGeometry(2 * length, 2 * width, thickness, n_s))
        assert longer == pytest.approx(2 * base, rel=1e-12)
        assert wider == pytest.approx(base, rel=1e-12)

    @given(st.floats(1e-8, 1e-6))
    def test_round_trip(self, l_k):
        n_s = sheet_density_from_inductance(l_k, GEOM1)
        assert kinetic_inductance(with_ns(GEOM1, n_s)) == pytest.approx(l_k, rel=1e-12)

    def test_device1_sheet_inductance(self):
        n_s = sheet_density_from_inductance(121e-9, GEOM1)
        l_k = kinetic_inductance(with_ns(GEOM1, n_s))
        assert sheet_inductance(l_k, GEOM1) * 1e12 == pytest.approx(18.2, abs=0.05)

    def test_same_film_densities_agree(self):
        n1 = sheet_density_from_inductance(121e-9, GEOM1)
        n2 = sheet_density_from_inductance(314e-9, GEOM2)
        assert abs(n2 / n1 - 1) < 0.10

    def test_device3_distinct_film(self):
        n1 = sheet_density_from_inductance(121e-9, GEOM1)
        n3 = sheet_density_from_inductance(309e-9, GEOM3)
        assert np.isfinite(n3) and n3 > 0
        assert abs(n3 / n1 - 1) > 0.2

    def test_missing_density(self):
        with pytest.raises(ParameterError):
            kinetic_inductance(GEOM1)

    def test_bad_inductance(self):
        with pytest.raises(ParameterError):
            sheet_density_from_inductance(0.0, GEOM1)


class TestTopology:
    @given(st.floats(1e-8, 1e-6), st.floats(100.0, 1e4))
    def test_impedance_identity(self, l_nw, z):
        t = CircuitTopology.from_impedance(l_nw, z)
        assert t.z_nw**2 * t.c_nw == pytest.approx(l_nw, rel=1e-12)

    def test_odd_cells_rejected(self):
        with pytest.raises(ParameterError):
            CircuitTopology(1e-7, 3e-14, n_cells=33)

    def test_device1_capacitance(self):
        assert DEVICE1_TOPO.c_nw * 1e15 == pytest.approx(35.4, abs=0.05)


class TestLadder:
    def test_capacitance_spd(self):
        lad = build_ladder(DEVICE1_TOPO)
        c = lad.capacitance
        assert np.allclose(c, c.T)
        assert np.linalg.eigvalsh(c).min() > 0

    def test_dc_series_inductance(self):
        lad = build_ladder(DEVICE1_TOPO)
        p0, p1 = lad.ports
        e = np.zeros(lad.n_nodes)
        e[p0], e[p1] = 1.0, -1.0
        # Inductance seen between the ports: e^T K^+ e.
        assert e @ np.linalg.pinv(lad.inv_inductance) @ e == pytest.approx(121e-9, rel=1e-9)

    def test_open_line_convergence(self):
        t = CircuitTopology(121e-9, 35e-15, 0.0, 0.0, 0.0, n_cells=8)
        f_open = 1 / (2 * math.sqrt(t.l_nw * t.c_nw)) / 1e9
        errs = []
        for n in (8, 16, 32, 64):
            m = antisymmetric(normal_modes(build_ladder(t.replace(n_cells=n))))[0]
            errs.append(abs(m.frequency / f_open - 1))
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        assert np.allclose(ratios, 4.0, rtol=0.02)

    def test_lumped_limit(self):
        t = CircuitTopology(121e-9, 4e-18, 0.0, 0.0, 4e-15, n_cells=16)
        m = antisymmetric(normal_modes(build_ladder(t)))[0]
        f_lumped = 1 / (2 * math.pi * math.sqrt(t.l_nw * t.c_j)) / 1e9
        assert m.frequency == pytest.approx(f_lumped, rel=1e-3)
        assert m.l_eff == pytest.approx(t.l_nw, rel=1e-3)


@pytest.fixture(scope="module")
def modes():
    return normal_modes(build_ladder(DEVICE1_TOPO, l_j=el_to_inductance(10.95)))


class TestModes:
    def test_symmetric_decoupled(self, modes):
        for m in modes:
            if m.symmetry == "symmetric":
                p0, p1 = 0, m.vector.size - 1
                assert abs(m.port_difference) < 1e-10
                assert abs(m.vector[p1] - m.vector[p0]) < 1e-10

    def test_antisymmetric_records(self, modes):
        lad = build_ladder(DEVICE1_TOPO, l_j=el_to_inductance(10.95))
        for m in antisymmetric(modes)[:6]:
            assert abs(m.port_difference) > 0
            v = m.vector
            assert v @ lad.capacitance @ v == pytest.approx(1.0, rel=1e-10)
            assert v @ lad.inv_inductance @ v == pytest.approx(m.angular_frequency**2, rel=1e-10)
            w = 1 / math.sqrt(m.l_eff * m.c_eff)
            assert w == pytest.approx(m.angular_frequency, rel=1e-10)

    def test_device1_two_modes_below_30ghz(self):
        bare = antisymmetric(normal_modes(build_ladder(DEVICE1_TOPO)))
        assert sum(m.frequency < 30 for m in bare) >= 2

    @given(st.floats(60e-9, 400e-9), st.floats(800.0, 3000.0), st.floats(0.0, 40e-15))
    def test_symmetric_decoupling_property(self, l_nw, z, c_0):
        t = CircuitTopology.from_impedance(l_nw, z, c_0=c_0, n_cells=16)
        for m in normal_modes(build_ladder(t)):
            if m.symmetry == "symmetric":
                assert abs(m.vector[-1] - m.vector[0]) < 1e-10 * np.abs(m.vector).max()

    def test_richardson_against_raw(self):
        fine = converged_modes(DEVICE1_TOPO, count=2)
        for n in (64, 128):
            raw = antisymmetric(normal_modes(build_ladder(DEVICE1_TOPO.replace(n_cells=n))))[:2]
            for a, b in zip(raw, fine):
                assert abs(a.frequency / b.frequency - 1) < 1e-3
        errs = [abs(antisymmetric(normal_modes(build_ladder(DEVICE1_TOPO.replace(n_cells=n))))[0].frequency
                    / fine[0].frequency - 1) for n in (32, 64)]
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


class TestReduction:
    def test_invariant_under_doubling(self):
        a = reduce_topology(DEVICE1_TOPO, 10.95)
        b = reduce_topology(DEVICE1_TOPO.replace(n_cells=128), 10.95)
        assert np.allclose(a.c_eff, b.c_eff, rtol=1e-9, atol=0)
        assert np.allclose(a.l_eff, b.l_eff, rtol=1e-9, atol=0)

    def test_needs_linearized_modes(self):
        with pytest.raises(ParameterError):
            reduce_to_modes(normal_modes(build_ladder(DEVICE1_TOPO)), 2, 10.95)

    def test_too_few_modes(self):
        t = DEVICE1_TOPO.replace(n_cells=8)
        modes = normal_modes(build_ladder(t, l_j=el_to_inductance(10.95)))
        with pytest.raises(ParameterError):
            reduce_to_modes(modes, 10, 10.95)

    def test_deep_well_plasma_limit(self):
        # Large E_J: the lowest transition tends to the linear frequency of
        # mode 0 with its inductance in parallel with L_J.
        errs = []
        for e_j in (20.0, 80.0, 320.0):
            p = reduce_topology(DEVICE1_TOPO, e_j, extrapolate=False)
            e = diagonalize(build_two_mode_hamiltonian(p, 0.0, dims=(40, 8)), 2)[0]
            w = math.sqrt(8 * p.e_c_modes[0] * (p.e_l_modes[0] + e_j))
            errs.append(abs((e[1] - e[0]) / w - 1))
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 0.02
