"""Parameter records and Hamiltonian assembly.

All Hamiltonians are H/h in GHz. The junction phase enters as
``cos(phi + phi_ext)`` with ``phi_ext = Phi_ext / phi0``; the opposite sign
convention is the relabeling ``phi_ext -> -phi_ext``.

The Josephson cosine is never Taylor expanded. Its Fock-basis matrix
elements come from the closed-form displacement operator, so they are exact
at any truncation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import constants as const
from .errors import ParameterError
from .kernels import displacement_moduli

DEFAULT_SINGLE_DIM = 60
DEFAULT_TWO_MODE_DIMS = (40, 20)
CONVERGENCE_LEVELS = 8
CONVERGENCE_TOL = 1e-6
MAX_SINGLE_DIM = 960
DEFAULT_MAX_COUPLED_DIM = 4000


def _positive(name, value):
    if not (np.isfinite(value) and value > 0):
        raise ParameterError(f"{name} must be finite and > 0, got {value!r}")


@dataclass(frozen=True)
class SingleModeParams:
    """Lumped fluxonium energies in GHz, with ``H/h = 4 E_C n^2 + ...``."""

    e_c: float
    e_l: float
    e_j: float

    def __post_init__(self):
        _positive("e_c", self.e_c)
        _positive("e_l", self.e_l)
        # e_j = 0 is the harmonic limit and is allowed.
        if not (np.isfinite(self.e_j) and self.e_j >= 0):
            raise ParameterError(f"e_j must be finite and >= 0, got {self.e_j!r}")

    @property
    def plasma_frequency(self):
        """Harmonic level spacing sqrt(8 E_C E_L) in GHz."""
        return math.sqrt(8 * self.e_c * self.e_l)

    def replace(self, **kw):
        return SingleModeParams(**{**self.__dict__, **kw})


@dataclass(frozen=True)
class TwoModeParams:
    """Effective parameters of the antisymmetric normal modes.

    Any number of modes is accepted; two is the validated configuration.
    Capacitances in farads, inductances in henries, offset charges in units
    of 2e, ``e_j`` in GHz. ``l_eff`` excludes the junction's own linear
    inductance, which reappears through the bilinear term and the cosine.
    """

    c_eff: tuple
    l_eff: tuple
    e_j: float
    q_offset: tuple = (0.0, 0.0)

    def __post_init__(self):
        c = tuple(float(v) for v in self.c_eff)
        l = tuple(float(v) for v in self.l_eff)
        q = tuple(float(v) for v in self.q_offset)
        if len(q) != len(c):
            q = q + (0.0,) * (len(c) - len(q)) if len(q) < len(c) else q
        if not (len(c) == len(l) == len(q)) or len(c) == 0:
            raise ParameterError("c_eff, l_eff and q_offset must have equal nonzero length")
        for i, (ci, li) in enumerate(zip(c, l)):
            _positive(f"c_eff[{i}]", ci)
            _positive(f"l_eff[{i}]", li)
        if not (np.isfinite(self.e_j) and self.e_j >= 0):
            raise ParameterError("e_j must be finite and >= 0")
        object.__setattr__(self, "c_eff", c)
        object.__setattr__(self, "l_eff", l)
        object.__setattr__(self, "q_offset", q)

    @property
    def n_modes(self):
        return len(self.c_eff)

    @property
    def l_j(self):
        """Junction inductance phi0^2 / (h E_J) in henries."""
        if self.e_j == 0:
            return math.inf
        return const.el_to_inductance(self.e_j)

    @property
    def e_c_modes(self):
        return tuple(const.capacitance_to_ec(c) for c in self.c_eff)

    @property
    def e_l_modes(self):
        return tuple(const.inductance_to_el(l) for l in self.l_eff)

    def replace(self, **kw):
        return TwoModeParams(**{**self.__dict__, **kw})


@dataclass(frozen=True)
class ResonatorParams:
    omega_r: float
    q_loaded: float
    g: float = 0.0

    def __post_init__(self):
        _positive("omega_r", self.omega_r)
        if not self.q_loaded > 1:
            raise ParameterError("q_loaded must exceed 1")

    @property
    def kappa(self):
        """Linewidth omega_r / Q in GHz (same 2*pi convention as omega_r)."""
        return self.omega_r / self.q_loaded


@dataclass
class HamiltonianMatrix:
    """A Hermitian matrix in GHz together with the operators of its basis.

    ``ops`` holds named operators in the same basis, e.g. ``"phase"`` and
    ``"charge"`` for the junction phase and the charge of mode 0.
    """

    elements: np.ndarray
    basis_tag: str
    dims: tuple
    ops: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.elements.shape[0]

    def hermiticity_error(self):
        h = self.elements
        return float(np.max(np.abs(h - h.conj().T))) if h.size else 0.0


def zero_point_phase(e_c, e_l):
    """phi_zpf = (8 E_C / E_L)^(1/4) / sqrt(2)."""
    return (8 * e_c / e_l) ** 0.25 / math.sqrt(2)


def oscillator_operators(dim, e_c, e_l):
    """Phase and charge operators of the harmonic part, truncated to ``dim``.

    ``phase = phi_zpf (a + a^dag)``, ``charge = i n_zpf (a^dag - a)`` with
    ``n_zpf = 1 / (2 phi_zpf)``.
    """
    if dim < 2:
        raise ParameterError("dim must be >= 2")
    _positive("e_c", e_c)
    _positive("e_l", e_l)
    s = zero_point_phase(e_c, e_l)
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1)
    phase = s * (a + a.T)
    charge = 1j * (a.T - a) / (2 * s)
    return phase, charge


def cosine_matrix(dim, s, phi_ext):
    """Exact Fock-basis matrix of cos(s (a + a^dag) + phi_ext)."""
    m = displacement_moduli(dim, s)
    k = np.abs(np.subtract.outer(np.arange(dim), np.arange(dim)))
    return m * np.cos(phi_ext + 0.5 * np.pi * k)


def _single_mode_matrix(p, phi_ext, dim):
    s = zero_point_phase(p.e_c, p.e_l)
    h = np.diag(p.plasma_frequency * (np.arange(dim) + 0.5))
    if p.e_j:
        h = h - p.e_j * cosine_matrix(dim, s, phi_ext)
    return h


def _lowest(h, k):
    k = min(k, h.shape[0])
    return sla.eigvalsh(h, subset_by_index=(0, k - 1))


def build_single_mode_hamiltonian(p, phi_ext, dim=None, check_convergence=None):
    """Fluxonium Hamiltonian ``4 E_C n^2 + E_L phi^2 / 2 - E_J cos(phi + phi_ext)``.

    With ``dim=None`` the basis starts at 60 and is doubled until the lowest
    eight eigenvalues move by less than 1e-6 GHz. An explicit ``dim`` skips
    that check unless ``check_convergence=True``. The outcome is recorded in
    ``diagnostics`` rather than raised.
    """
    auto = dim is None
    if check_convergence is None:
        check_convergence = auto
    dim = DEFAULT_SINGLE_DIM if auto else int(dim)
    if dim < 2:
        raise ParameterError("dim must be >= 2")
    h = _single_mode_matrix(p, phi_ext, dim)
    diagnostics = {"dim": dim}
    if check_convergence:
        while True:
            big = _single_mode_matrix(p, phi_ext, 2 * dim)
            nlev = min(CONVERGENCE_LEVELS, dim)
            delta = float(np.max(np.abs(_lowest(h, nlev) - _lowest(big, nlev))))
            converged = delta < CONVERGENCE_TOL
            if converged or not auto or 2 * dim > MAX_SINGLE_DIM:
                break
            dim *= 2
            h = big
        diagnostics.update(dim=dim, converged=converged, delta=delta)
    phase, charge = oscillator_operators(dim, p.e_c, p.e_l)
    return HamiltonianMatrix(
        elements=h,
        basis_tag="oscillator",
        dims=(dim,),
        ops={"phase": phase, "charge": charge},
        diagnostics=diagnostics,
    )


def _embed(op, index, dims):
    mats = [np.eye(d) for d in dims]
    mats[index] = op
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def build_two_mode_hamiltonian(p, phi_ext, dims=None, josephson="cosine"):
    """Multimode Hamiltonian on the product oscillator basis.

    Each mode contributes ``4 E_C,i (n_i - n_gi)^2 + E_L,i theta_i^2 / 2``;
    the modes couple through ``-E_J theta_0 theta_1`` (the ``-phi_0 phi_1 / L_J``
    term) and through ``-E_J cos(sum theta_i + phi_ext)``.

    ``josephson="quadratic"`` replaces the cosine by its second-order
    expansion about zero phase. It exists for comparisons with linear
    circuit theory only.
    """
    if dims is None:
        dims = DEFAULT_TWO_MODE_DIMS if p.n_modes == 2 else (DEFAULT_TWO_MODE_DIMS[0],) + (12,) * (p.n_modes - 1)
    dims = tuple(int(d) for d in dims)
    if len(dims) != p.n_modes or min(dims) < 2:
        raise ParameterError("need one basis size >= 2 per mode")
    e_c = p.e_c_modes
    e_l = p.e_l_modes
    total = int(np.prod(dims))
    h = np.zeros((total, total), dtype=complex)
    phases, charges = [], []
    for i, d in enumerate(dims):
        phase_i, charge_i = oscillator_operators(d, e_c[i], e_l[i])
        omega = math.sqrt(8 * e_c[i] * e_l[i])
        local = np.diag(omega * (np.arange(d) + 0.5)).astype(complex)
        ng = p.q_offset[i]
        if ng:
            local += -8 * e_c[i] * ng * charge_i + 4 * e_c[i] * ng**2 * np.eye(d)
        h += _embed(local, i, dims)
        phases.append(_embed(phase_i, i, dims))
        charges.append(_embed(charge_i, i, dims))
    junction_phase = sum(phases)
    if p.e_j:
        for i in range(p.n_modes):
            for j in range(i + 1, p.n_modes):
                h -= p.e_j * (phases[i] @ phases[j])
        if josephson == "cosine":
            mod = np.ones((1, 1))
            kk = np.zeros((1, 1), dtype=int)
            for i, d in enumerate(dims):
                s = zero_point_phase(e_c[i], e_l[i])
                mod = np.kron(mod, displacement_moduli(d, s))
                ki = np.abs(np.subtract.outer(np.arange(d), np.arange(d)))
                kk = np.add.outer(kk, ki).transpose(0, 2, 1, 3).reshape(mod.shape)
            h -= p.e_j * mod * np.cos(phi_ext + 0.5 * np.pi * kk)
        elif josephson == "quadratic":
            h += 0.5 * p.e_j * (junction_phase @ junction_phase)
        else:
            raise ParameterError(f"unknown josephson mode {josephson!r}")
    h = 0.5 * (h + h.conj().T)
    if not np.any(h.imag):
        h = h.real
    ops = {"phase": junction_phase, "charge": charges[0]}
    for i in range(p.n_modes):
        ops[f"phase{i}"] = phases[i]
        ops[f"charge{i}"] = charges[i]
        a = np.diag(np.sqrt(np.arange(1, dims[i], dtype=float)), 1)
        ops[f"number{i}"] = _embed(a.T @ a, i, dims)
        ops[f"lower{i}"] = _embed(a, i, dims)
    return HamiltonianMatrix(elements=h, basis_tag="oscillator-product", dims=dims, ops=ops)


def couple_resonator(h_qubit, charge_op, r, n_fock, max_dim=DEFAULT_MAX_COUPLED_DIM):
    """Qubit (any basis) coupled to a resonator through its charge.

    ``H = H_q (x) 1 + omega_r 1 (x) a^dag a + g n (x) (a + a^dag)``.
    """
    if n_fock < 2:
        raise ParameterError("n_fock must be >= 2")
    hq = h_qubit.elements if isinstance(h_qubit, HamiltonianMatrix) else np.asarray(h_qubit)
    dq = hq.shape[0]
    if dq * n_fock > max_dim:
        raise ParameterError(
            f"coupled dimension {dq * n_fock} exceeds cap {max_dim}; reduce qubit levels or n_fock")
    a = np.diag(np.sqrt(np.arange(1, n_fock, dtype=float)), 1)
    iq, ir = np.eye(dq), np.eye(n_fock)
    h = (np.kron(hq, ir) + r.omega_r * np.kron(iq, a.T @ a)
         + r.g * np.kron(np.asarray(charge_op), a + a.T))
    h = 0.5 * (h + h.conj().T)
    ops = {
        "charge": np.kron(np.asarray(charge_op), ir),
        "photons": np.kron(iq, a.T @ a),
    }
    return HamiltonianMatrix(elements=h, basis_tag="qubit-fock", dims=(dq, n_fock), ops=ops)
