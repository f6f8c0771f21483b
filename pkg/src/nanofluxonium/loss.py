"""Relaxation through inductive, capacitive and Purcell channels.

Rates are in s^-1. Qubit frequencies and energies are in GHz (f = omega/2pi).
Quasiparticle loss is not modeled.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from . import constants as const
from .errors import ParameterError
from .spectra import solve

DEFAULT_TEMPERATURE = 0.020


@dataclass(frozen=True)
class LossModel:
    q_l: float
    q_c: float
    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self):
        if not (self.q_l > 0 and self.q_c > 0):
            raise ParameterError("quality factors must be > 0")
        if not self.temperature >= 0:
            raise ParameterError("temperature must be >= 0")


@dataclass
class RateResult:
    gamma_ind: float
    gamma_cap: float
    gamma_purcell: float = 0.0

    @property
    def total(self):
        return self.gamma_ind + self.gamma_cap + self.gamma_purcell

    @property
    def t1_total(self):
        return 1.0 / self.total if self.total > 0 else math.inf

    @staticmethod
    def _inv(rate):
        return 1.0 / rate if rate > 0 else math.inf

    @property
    def t1_ind(self):
        return self._inv(self.gamma_ind)

    @property
    def t1_cap(self):
        return self._inv(self.gamma_cap)

    @property
    def t1_purcell(self):
        return self._inv(self.gamma_purcell)


def thermal_factor(omega_q, temperature):
    """coth(h f / 2 k_B T) + 1, equal to 2 at zero temperature."""
    if omega_q <= 0:
        raise ParameterError("omega_q must be > 0")
    kt = const.thermal_energy_ghz(temperature)
    # kt underflows to 0 for subnormal temperatures; treat as the T -> 0 limit.
    if kt == 0 or omega_q > 700 * kt:
        return 2.0
    return 1.0 / math.tanh(omega_q / (2 * kt)) + 1.0


def gamma_inductive(e_l, omega_q, mat_elem_sq, m):
    """(E_L / hbar Q_L) (coth(hbar w / 2 k T) + 1) |<phi>|^2."""
    return (2 * math.pi * e_l * const.GHz / m.q_l
            * thermal_factor(omega_q, m.temperature) * mat_elem_sq)


def gamma_capacitive(e_c, omega_q, mat_elem_sq, m):
    """(hbar w^2 / 8 E_C Q_C) (coth(hbar w / 2 k T) + 1) |<phi>|^2."""
    return (2 * math.pi * omega_q**2 / (8 * e_c) * const.GHz / m.q_c
            * thermal_factor(omega_q, m.temperature) * mat_elem_sq)


def gamma_purcell(g, delta, kappa):
    """(g / delta)^2 kappa, with ``kappa`` the resonator linewidth in GHz."""
    if delta == 0:
        raise ParameterError("resonant regime: Purcell estimate needs a nonzero detuning")
    return (g / delta) ** 2 * 2 * math.pi * kappa * const.GHz


def crossover_frequency(e_c, e_l, m):
    """Frequency where the capacitive and inductive rates are equal."""
    return math.sqrt(8 * e_c * e_l * m.q_c / m.q_l)


def equivalent_series_resistance(frequency_ghz, inductance, q):
    """R = omega L / Q for an inductor with quality factor Q."""
    return 2 * math.pi * frequency_ghz * const.GHz * inductance / q


def fluxon_transition(s):
    """Index of the level reached by the fluxon transition from the ground state.

    That is the lowest level in a different well than the ground state; if
    the ground state is itself delocalized (near half flux) it is level 1.
    """
    ground = s.labels[0]
    if ground.delocalized:
        return 1
    for j, lab in enumerate(s.labels[1:], start=1):
        if lab.well_index != ground.well_index and not lab.jj_photons:
            return j
    return None


def rates_for(p, omega_q, mat_elem_sq, m, resonator=None, charge_elem=0.0):
    g_p = 0.0
    if resonator is not None and resonator.g:
        delta = omega_q - resonator.omega_r
        g_p = gamma_purcell(resonator.g * charge_elem, delta, resonator.kappa)
    return RateResult(
        gamma_ind=gamma_inductive(p.e_l, omega_q, mat_elem_sq, m),
        gamma_cap=gamma_capacitive(p.e_c, omega_q, mat_elem_sq, m),
        gamma_purcell=g_p,
    )


@dataclass
class T1Point:
    phi_ext: float
    omega_q: float
    mat_elem_sq: float
    rates: RateResult
    charge_elem: float = 0.0


def t1_point(p, phi_ext, m, resonator=None, k=8, dim=None):
    s = solve(p, phi_ext, k=k, dim=dim)
    j = fluxon_transition(s)
    if j is None:
        return None
    omega_q = float(s.energies[j] - s.energies[0])
    if omega_q <= 0:
        return None
    me = float(abs(s.phase[0, j]) ** 2)
    ne = float(abs(s.charge[0, j]))
    return T1Point(phi_ext, omega_q, me, rates_for(p, omega_q, me, m, resonator, ne), ne)


def t1_curve(p, m, flux_grid, resonator=None, k=8, dim=None):
    """Per-channel and total T1 of the fluxon transition along a flux grid.

    Points where no fluxon transition can be identified are skipped with a
    warning. Results are returned in grid order.
    """
    out = []
    for phi in flux_grid:
        pt = t1_point(p, float(phi), m, resonator, k=k, dim=dim)
        if pt is None:
            warnings.warn(f"no fluxon transition at phi_ext={phi:.6g}; point skipped")
            continue
        out.append(pt)
    return out


@dataclass
class LossFit:
    model: LossModel
    residuals: np.ndarray
    covariance: np.ndarray
    degenerate: bool = False
    messages: list = field(default_factory=list)


class MatrixElementTable:
    """Fluxon matrix element as a function of qubit frequency.

    Built once from a flux sweep over the branch where the fluxon frequency
    increases monotonically away from half flux.
    """

    def __init__(self, p, flux_grid=None, k=8):
        if flux_grid is None:
            flux_grid = np.linspace(-math.pi, -0.5 * math.pi, 121)
        freqs, mes = [], []
        for phi in flux_grid:
            s = solve(p, float(phi), k=k)
            j = fluxon_transition(s)
            if j is None:
                continue
            f = float(s.energies[j] - s.energies[0])
            if freqs and f <= freqs[-1]:
                break
            freqs.append(f)
            mes.append(float(abs(s.phase[0, j]) ** 2))
        if len(freqs) < 2:
            raise ParameterError("could not tabulate the fluxon branch")
        self.freqs = np.array(freqs)
        self.mat_elem_sq = np.array(mes)

    def __call__(self, f):
        return np.interp(f, self.freqs, self.mat_elem_sq)


def model_t1(p, freqs, table, m):
    out = []
    for f in freqs:
        out.append(rates_for(p, float(f), float(table(f)), m).t1_total)
    return np.array(out)


def fit_quality_factors(data, p, m0, table=None):
    """Fit (Q_L, Q_C) to measured (frequency GHz, T1 s) pairs.

    Least squares on log T1 at fixed temperature, parameterized in log Q.
    The covariance estimate refers to (Q_L, Q_C).
    """
    data = sorted((float(f), float(t)) for f, t in data)
    if len(data) < 3:
        raise ParameterError("need at least 3 (frequency, T1) points")
    freqs = np.array([d[0] for d in data])
    t1 = np.array([d[1] for d in data])
    if table is None:
        table = MatrixElementTable(p)
    me = table(freqs)
    thermal = np.array([thermal_factor(f, m0.temperature) for f in freqs])
    # Both rates are linear in 1/Q: Gamma = a / Q_L + b / Q_C.
    a = 2 * math.pi * p.e_l * const.GHz * thermal * me
    b = 2 * math.pi * freqs**2 / (8 * p.e_c) * const.GHz * thermal * me

    def resid(x):
        ql, qc = np.exp(x)
        return np.log(t1) + np.log(a / ql + b / qc)

    x0 = np.log([m0.q_l, m0.q_c])
    sol = least_squares(resid, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
    ql, qc = np.exp(sol.x)
    model = LossModel(q_l=float(ql), q_c=float(qc), temperature=m0.temperature)
    dof = max(len(freqs) - 2, 1)
    s2 = float(sol.fun @ sol.fun) / dof
    jac = sol.jac * np.exp(sol.x)[None, :] ** -1  # d resid / dQ
    try:
        cov = np.linalg.inv(jac.T @ jac) * s2
    except np.linalg.LinAlgError:
        cov = np.full((2, 2), np.nan)
    fx = crossover_frequency(p.e_c, p.e_l, model)
    messages = []
    degenerate = bool(np.all(freqs < fx) or np.all(freqs > fx))
    if degenerate:
        msg = f"all data on one side of the crossover at {fx:.3f} GHz; Q factors weakly constrained"
        warnings.warn(msg)
        messages.append(msg)
    return LossFit(model=model, residuals=sol.fun, covariance=cov, degenerate=degenerate, messages=messages)
