"""Independent reference computations used by the tests.

Nothing here imports the oscillator-basis code paths it is meant to check.
"""

import math
from fractions import Fraction

import numpy as np
import scipy.linalg as sla

FD_ORDER = 16


def central_second_derivative(order=FD_ORDER):
    """Exact stencil weights c_0..c_m of the order-``order`` central second derivative."""
    m = order // 2
    c = [Fraction(0)] * (m + 1)
    for k in range(1, m + 1):
        c[k] = Fraction(2 * (-1) ** (k + 1) * math.factorial(m) ** 2,
                        k * k * math.factorial(m - k) * math.factorial(m + k))
    c[0] = -2 * sum(c[1:])
    return np.array([float(x) for x in c])


def grid_levels(e_c, e_l, e_j, phi_ext, k=6, points=2048, half_width=8 * math.pi):
    """Lowest ``k`` fluxonium levels from a uniform position grid (Dirichlet ends)."""
    x = np.linspace(-half_width, half_width, points)
    h = x[1] - x[0]
    w = central_second_derivative()
    m = w.size - 1
    # Upper banded storage for -4 E_C d^2/dphi^2 + V.
    band = np.zeros((m + 1, points))
    band[m] = -4 * e_c * w[0] / h**2 + 0.5 * e_l * x**2 - e_j * np.cos(x + phi_ext)
    for j in range(1, m + 1):
        band[m - j, j:] = -4 * e_c * w[j] / h**2
    return sla.eig_banded(band, eigvals_only=True, select="i", select_range=(0, k - 1))


def grid_charge_matrix(dim, phi_zpf, points=2048, half_width=8 * math.pi):
    """<j| -i d/dphi |k> between oscillator eigenfunctions, derivative taken on the grid."""
    x = np.linspace(-half_width, half_width, points)
    h = x[1] - x[0]
    u = x / phi_zpf
    # Normalized Hermite functions in phi by recurrence.
    psi = np.zeros((dim, points))
    psi[0] = np.exp(-0.25 * u * u) / (2 * math.pi * phi_zpf**2) ** 0.25
    if dim > 1:
        psi[1] = u * psi[0]
    for n in range(1, dim - 1):
        psi[n + 1] = (u * psi[n] - math.sqrt(n) * psi[n - 1]) / math.sqrt(n + 1)
    # Eighth-order central first derivative.
    w1 = (4 / 5, -1 / 5, 4 / 105, -1 / 280)
    d = np.zeros_like(psi)
    for j, c in enumerate(w1, start=1):
        d[:, j:-j] += c * (psi[:, 2 * j:] - psi[:, :-2 * j])
    d /= h
    return -1j * (psi @ d.T) * h


def harmonic_levels(e_c, e_l, k):
    w = math.sqrt(8 * e_c * e_l)
    return w * (np.arange(k) + 0.5)


def bloch_steady_excited(omega_rabi, delta, gamma):
    """Excited population of a driven, decaying two-level system (angular units).

    H = -delta/2 sz + omega_rabi/2 sx, decay rate gamma, no pure dephasing.
    """
    s = 2 * omega_rabi**2 / (gamma**2 + 4 * delta**2)
    return 0.5 * s / (1 + s)


def perturbative_resonator_shift(energies, charge, ground, omega_r, g):
    """Second-order dispersive shift of the resonator frequency with the qubit in ``ground``."""
    shift = 0.0
    for j in range(len(energies)):
        if j == ground:
            continue
        w = energies[j] - energies[ground]
        n2 = abs(charge[ground, j]) ** 2
        shift += g * g * n2 * (1 / (omega_r - w) + 1 / (-omega_r - w))
    return shift
