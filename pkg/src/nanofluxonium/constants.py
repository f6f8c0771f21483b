"""Physical constants and the unit conversions used across the package.

Energies are carried in GHz (E/h), times in seconds, flux as the phase
Phi_ext / phi0 in radians, inductances in henries and capacitances in farads.
"""

import math

from scipy import constants as _c

h = _c.h
hbar = _c.hbar
e = _c.e
k_B = _c.k
m_e = _c.m_e

#: reduced flux quantum hbar / 2e
phi0 = hbar / (2 * e)

GHz = 1e9


def capacitance_to_ec(c):
    """Charging energy e^2 / 2C in GHz."""
    return e**2 / (2 * c * h) / GHz


def ec_to_capacitance(e_c):
    return e**2 / (2 * e_c * GHz * h)


def inductance_to_el(l):
    """Inductive energy phi0^2 / L in GHz."""
    return phi0**2 / (l * h) / GHz


def el_to_inductance(e_l):
    return phi0**2 / (e_l * GHz * h)


def ghz_to_angular(f):
    """Frequency in GHz to angular frequency in rad/s."""
    return 2 * math.pi * f * GHz


def thermal_energy_ghz(temperature):
    return k_B * temperature / h / GHz
