"""Kinetic inductance of a nanowire and its reduction to effective junction modes.

The distributed wire is discretized as a symmetric LC ladder between the two
junction ports. Normal modes are solved separately in the mirror-symmetric
and mirror-antisymmetric subspaces, so symmetric modes carry exactly zero
flux difference across the junction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from . import constants as const
from .circuit import TwoModeParams
from .errors import ConvergenceError, ParameterError

DEFAULT_N_CELLS = 64
DEFAULT_C_J = 4e-15


@dataclass(frozen=True)
class NanowireGeometry:
    """Wire dimensions in meters; ``length`` is the full wire length."""

    length: float
    width: float
    thickness: float
    n_s: float | None = None

    def __post_init__(self):
        for name in ("length", "width", "thickness"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ParameterError(f"{name} must be > 0")
        if self.length < self.width:
            raise ParameterError("length must be at least the width")
        if self.n_s is not None and not (np.isfinite(self.n_s) and self.n_s > 0):
            raise ParameterError("n_s must be > 0 when given")

    @property
    def squares(self):
        return self.length / self.width


def kinetic_inductance(g):
    """Kinetic inductance (m / 2 e^2 n_s) (l / w d) in henries."""
    if g.n_s is None:
        raise ParameterError("kinetic inductance needs the Cooper-pair density n_s")
    return const.m_e / (2 * const.e**2 * g.n_s) * (g.length / (g.width * g.thickness))


def sheet_density_from_inductance(l_k, g):
    """Cooper-pair density (m^-3) that yields kinetic inductance ``l_k``."""
    if not (np.isfinite(l_k) and l_k > 0):
        raise ParameterError("l_k must be > 0")
    return const.m_e / (2 * const.e**2 * l_k) * (g.length / (g.width * g.thickness))


def sheet_inductance(l_k, g):
    """Inductance per square, ``l_k * width / length``."""
    return l_k * g.width / g.length


def characteristic_impedance(l_nw, c_nw):
    return math.sqrt(l_nw / c_nw)


@dataclass(frozen=True)
class CircuitTopology:
    l_nw: float
    c_nw: float
    c_0: float = 0.0
    c_g: float = 0.0
    c_j: float = DEFAULT_C_J
    n_cells: int = DEFAULT_N_CELLS

    def __post_init__(self):
        _pos = lambda n, v, strict: (np.isfinite(v) and (v > 0 if strict else v >= 0))
        if not (_pos("l_nw", self.l_nw, True) and _pos("c_nw", self.c_nw, True)):
            raise ParameterError("l_nw and c_nw must be > 0")
        for name in ("c_0", "c_g", "c_j"):
            if not _pos(name, getattr(self, name), False):
                raise ParameterError(f"{name} must be >= 0")
        if self.n_cells < 8:
            raise ParameterError("n_cells must be >= 8")
        if self.n_cells % 2:
            raise ParameterError("n_cells must be even (ladder symmetric about its midpoint)")

    @classmethod
    def from_impedance(cls, l_nw, z_nw, **kw):
        return cls(l_nw=l_nw, c_nw=l_nw / z_nw**2, **kw)

    @property
    def z_nw(self):
        return characteristic_impedance(self.l_nw, self.c_nw)

    @property
    def port_capacitance(self):
        # Gate capacitor in series with an AC-grounded drive node.
        return self.c_0 + self.c_g

    def replace(self, **kw):
        return replace(self, **kw)


@dataclass
class LadderNetwork:
    """Node capacitance and inverse-inductance matrices of the discretized wire.

    Nodes ``0`` and ``n_cells`` are the junction ports.
    """

    capacitance: np.ndarray
    inv_inductance: np.ndarray
    topology: CircuitTopology
    l_j: float | None = None

    @property
    def n_nodes(self):
        return self.capacitance.shape[0]

    @property
    def ports(self):
        return 0, self.n_nodes - 1


@dataclass
class ModeRecord:
    """One normal mode of a ladder.

    ``port_difference`` is the flux difference across the junction ports for
    the capacitance-normalized mode vector. For antisymmetric modes
    ``c_eff = 1 / port_difference**2`` and ``l_eff = 1 / (omega**2 c_eff)``;
    these describe the mode in the coordinate equal to its contribution to
    the junction flux. Symmetric modes leave them ``None``.
    """

    frequency: float
    symmetry: str
    port_difference: float
    c_eff: float | None
    l_eff: float | None
    l_j: float | None = None
    vector: np.ndarray | None = field(default=None, repr=False)

    @property
    def angular_frequency(self):
        return 2 * math.pi * self.frequency * const.GHz


def build_ladder(t, l_j=None):
    """Discretize the wire into ``t.n_cells`` LC stages.

    Each stage carries ``l_nw / n_cells``; ground capacitance is
    ``c_nw / n_cells`` per interior node and half that at the two ports,
    which also carry ``c_0 + c_g``. ``c_j`` bridges the ports; when ``l_j`` is
    given the junction is additionally represented by that linear inductance.
    """
    n = t.n_cells
    nodes = n + 1
    lc = t.l_nw / n
    cc = t.c_nw / n
    cap = np.zeros((nodes, nodes))
    ground = np.full(nodes, cc)
    ground[0] = ground[-1] = 0.5 * cc + t.port_capacitance
    cap[np.diag_indices(nodes)] = ground
    k = np.zeros((nodes, nodes))
    idx = np.arange(n)
    k[idx, idx] += 1 / lc
    k[idx + 1, idx + 1] += 1 / lc
    k[idx, idx + 1] -= 1 / lc
    k[idx + 1, idx] -= 1 / lc

    def bridge(mat, value):
        mat[0, 0] += value
        mat[-1, -1] += value
        mat[0, -1] -= value
        mat[-1, 0] -= value

    bridge(cap, t.c_j)
    if l_j is not None:
        if not l_j > 0:
            raise ParameterError("l_j must be > 0")
        bridge(k, 1 / l_j)
    return LadderNetwork(capacitance=cap, inv_inductance=k, topology=t, l_j=l_j)


def _parity_bases(nodes):
    n = nodes - 1
    half = n // 2
    anti = np.zeros((nodes, half))
    sym = np.zeros((nodes, half + 1))
    r = 1 / math.sqrt(2)
    for i in range(half):
        anti[i, i] = r
        anti[n - i, i] = -r
        sym[i, i] = r
        sym[n - i, i] = r
    sym[half, half] = 1.0
    return sym, anti


def normal_modes(ladder):
    """Normal modes of the linear network, sorted by frequency.

    Solves ``K v = omega^2 C v`` within each mirror-parity subspace.
    """
    c = ladder.capacitance
    try:
        np.linalg.cholesky(c)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError("capacitance matrix is not positive definite",
                               {"min_eigenvalue": float(np.linalg.eigvalsh(c).min())}) from exc
    sym, anti = _parity_bases(ladder.n_nodes)
    p0, p1 = ladder.ports
    modes = []
    for tag, basis in (("symmetric", sym), ("antisymmetric", anti)):
        cs = basis.T @ c @ basis
        ks = basis.T @ ladder.inv_inductance @ basis
        lam, y = sla.eigh(ks, cs)
        vecs = basis @ y
        for j in range(lam.size):
            v = vecs[:, j]
            omega = math.sqrt(max(lam[j], 0.0))
            if tag == "symmetric":
                d = 0.0
                c_eff = l_eff = None
            else:
                # Fix the sign so the junction flux difference is positive.
                d = float(v[p1] - v[p0])
                if d < 0:
                    v, d = -v, -d
                c_eff = 1.0 / d**2
                l_eff = 1.0 / (omega**2 * c_eff) if omega > 0 else math.inf
            modes.append(ModeRecord(
                frequency=omega / (2 * math.pi) / const.GHz, symmetry=tag, port_difference=d,
                c_eff=c_eff, l_eff=l_eff, l_j=ladder.l_j, vector=v))
    modes.sort(key=lambda m: (m.frequency, m.symmetry))
    return modes


def antisymmetric(modes):
    return [m for m in modes if m.symmetry == "antisymmetric"]


def converged_modes(t, l_j=None, count=4, levels=3):
    """Lowest ``count`` antisymmetric modes, Richardson-extrapolated in 1/n^2.

    Ladders with ``n, 2n, 4n`` cells (for ``levels=3``) are solved and the
    frequency, ``c_eff`` and ``l_eff`` of each mode are combined by Romberg
    elimination of the h^2 and h^4 error terms.
    """
    table = []
    for lvl in range(levels):
        lad = build_ladder(t.replace(n_cells=t.n_cells * 2**lvl), l_j=l_j)
        am = antisymmetric(normal_modes(lad))
        if len(am) < count:
            raise ParameterError(f"ladder has only {len(am)} antisymmetric modes, need {count}")
        table.append(np.array([[m.frequency, m.c_eff, m.l_eff] for m in am[:count]]))
    for order in range(1, levels):
        f = 4.0**order
        table = [(f * table[i + 1] - table[i]) / (f - 1) for i in range(len(table) - 1)]
    best = table[0]
    out = []
    for freq, c_eff, l_eff in best:
        out.append(ModeRecord(frequency=float(freq), symmetry="antisymmetric",
                              port_difference=1.0 / math.sqrt(c_eff), c_eff=float(c_eff),
                              l_eff=float(l_eff), l_j=l_j))
    return out


def reduce_to_modes(modes, count, e_j, q_offset=None):
    """Effective multimode parameters from junction-linearized normal modes.

    The modes must have been computed with the junction represented by its
    linear inductance ``L_J = phi0^2 / (h E_J)``. Each mode's full linear
    stiffness ``1 / l_eff`` includes a ``1 / L_J`` share which the effective
    Hamiltonian reintroduces through the bilinear term and the cosine; it is
    removed here so the linearized model reproduces the mode frequencies.
    """
    am = antisymmetric(modes)
    if len(am) < count:
        raise ParameterError(f"need {count} antisymmetric modes, found {len(am)}")
    l_j = const.el_to_inductance(e_j)
    chosen = am[:count]
    c_eff, l_eff = [], []
    for i, m in enumerate(chosen):
        if m.l_j is None or abs(m.l_j - l_j) > 1e-9 * l_j:
            raise ParameterError("modes must be computed with the junction linearized at this E_J")
        stiffness = 1.0 / m.l_eff - 1.0 / l_j
        if stiffness <= 0:
            raise ParameterError(f"mode {i} has no positive stiffness left after removing the junction")
        c_eff.append(m.c_eff)
        l_eff.append(1.0 / stiffness)
    q = tuple(q_offset) if q_offset is not None else (0.0,) * count
    return TwoModeParams(c_eff=tuple(c_eff), l_eff=tuple(l_eff), e_j=e_j, q_offset=q)


def reduce_topology(t, e_j, count=2, extrapolate=True, q_offset=None):
    """Topology to effective multimode parameters in one step."""
    l_j = const.el_to_inductance(e_j)
    if extrapolate:
        modes = converged_modes(t, l_j=l_j, count=count)
    else:
        modes = normal_modes(build_ladder(t, l_j=l_j))
    return reduce_to_modes(modes, count, e_j, q_offset)
