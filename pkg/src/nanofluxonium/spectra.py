"""Diagonalization, well-based state labels, transition catalogs and flux sweeps."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq

from . import constants as const
from .circuit import (
    HamiltonianMatrix,
    SingleModeParams,
    TwoModeParams,
    build_single_mode_hamiltonian,
    build_two_mode_hamiltonian,
    oscillator_operators,
    zero_point_phase,
)
from .errors import ConvergenceError

DELOCALIZED_THRESHOLD = 0.6
DEFAULT_TEMPERATURE = 0.020
THERMAL_WINDOW = 3.0
SELECTION_TOL = 1e-9
LADDER_LETTERS = "gefhijklmnopqrstuvwxyz"


@dataclass(frozen=True, order=True)
class StateLabel:
    well_index: int
    ladder_rank: int
    delocalized: bool = False
    jj_photons: int = 0

    @property
    def letter(self):
        if self.ladder_rank < len(LADDER_LETTERS):
            return LADDER_LETTERS[self.ladder_rank]
        return f"L{self.ladder_rank}"

    def __str__(self):
        tag = f"{self.letter}{self.well_index}"
        if self.jj_photons:
            tag += f"+{self.jj_photons}JJ"
        return tag


@dataclass
class LabeledSpectrum:
    """Eigenlevels with labels, position-basis samples and operator matrices.

    ``charge`` and ``phase`` are the junction charge and phase operators in
    the eigenbasis (``k x k``). ``density`` holds |psi|^2 on ``grid`` for
    every level (for multimode spectra it is the marginal over the total
    junction phase).
    """

    energies: np.ndarray
    labels: list
    phi_ext: float
    grid: np.ndarray
    density: np.ndarray
    charge: np.ndarray
    phase: np.ndarray
    well_masses: np.ndarray
    wells: np.ndarray
    params: object = None
    eigenvectors: np.ndarray | None = None
    amplitudes: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.energies)

    def index(self, label):
        """Level index of a label (``StateLabel`` or string such as ``"e-1"``)."""
        key = str(label)
        for i, lab in enumerate(self.labels):
            if str(lab) == key:
                return i
        raise KeyError(f"no level labeled {key!r}")

    def label_strings(self):
        return [str(l) for l in self.labels]


@dataclass
class TransitionRecord:
    from_label: StateLabel
    to_label: StateLabel
    frequency: float
    photon_order: int
    dipole_n: float
    dipole_phi: float
    kind: str
    from_index: int = -1
    to_index: int = -1

    @property
    def level_difference(self):
        return self.frequency * self.photon_order


@dataclass
class SweepResult:
    flux_grid: np.ndarray
    catalogs: list
    spectra: list
    errors: dict = field(default_factory=dict)

    def rows(self):
        """Flattened rows in the sweep CSV column order."""
        out = []
        for phi, catalog in zip(self.flux_grid, self.catalogs):
            for t in catalog or ():
                out.append((float(phi), str(t.from_label), str(t.to_label), t.photon_order,
                            t.frequency, t.dipole_n, t.dipole_phi, t.kind))
        return out


def diagonalize(h, k):
    """Lowest ``k`` eigenpairs of a Hermitian matrix, ascending."""
    mat = h.elements if isinstance(h, HamiltonianMatrix) else np.asarray(h)
    dim = mat.shape[0]
    if k > dim:
        raise ValueError(f"k={k} exceeds dimension {dim}")
    vals, vecs = sla.eigh(mat, subset_by_index=(0, k - 1))
    scale = max(float(np.linalg.norm(mat, 2)) if dim <= 400 else float(np.abs(mat).sum(axis=1).max()), 1.0)
    resid = np.linalg.norm(mat @ vecs - vecs * vals, axis=0)
    if np.any(resid > 1e-9 * scale):
        raise ConvergenceError("eigenpair residuals above tolerance",
                               {"residuals": resid.tolist(), "scale": scale})
    return vals, vecs


def hermite_functions(nmax, x):
    """Normalized Hermite functions h_0..h_{nmax-1} sampled at ``x``."""
    x = np.asarray(x, dtype=float)
    out = np.empty((nmax, x.size))
    out[0] = math.pi ** -0.25 * np.exp(-0.5 * x * x)
    if nmax > 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for n in range(1, nmax - 1):
        out[n + 1] = math.sqrt(2.0 / (n + 1)) * x * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
    return out


def oscillator_wavefunctions(dim, phi_zpf, grid):
    """Fock states of ``phi = phi_zpf (a + a^dag)`` on a phase grid."""
    sigma = math.sqrt(2.0) * phi_zpf
    return hermite_functions(dim, grid / sigma) / math.sqrt(sigma)


def potential(phi, e_l, e_j, phi_ext):
    return 0.5 * e_l * phi**2 - e_j * np.cos(phi + phi_ext)


def well_extrema(e_l, e_j, phi_ext, half_width):
    """Minima and maxima of the single-mode potential within ``|phi| <= half_width``.

    Seeds on a 2*pi/64 grid, then refines each sign change of V' with a
    bracketed root solve.
    """

    def dv(x):
        return e_l * x + e_j * math.sin(x + phi_ext)

    xs = np.arange(-half_width, half_width + 1e-12, 2 * math.pi / 64)
    d = e_l * xs + e_j * np.sin(xs + phi_ext)
    minima, maxima = [], []
    for a, b, da, db in zip(xs[:-1], xs[1:], d[:-1], d[1:]):
        if da == 0.0:
            root = a
        elif da * db < 0:
            root = brentq(dv, a, b, xtol=1e-14)
        else:
            continue
        (minima if da < db else maxima).append(root)
    if not minima:
        minima = [brentq(dv, -half_width, half_width)] if dv(-half_width) < 0 < dv(half_width) else [0.0]
    return np.array(sorted(set(minima))), np.array(sorted(set(maxima)))


def _basin_masses(density, grid, minima, maxima):
    # Boundaries sit at the barrier tops between consecutive minima; the
    # outermost basins extend to the grid edges.
    edges = []
    for lo, hi in zip(minima[:-1], minima[1:]):
        between = maxima[(maxima > lo) & (maxima < hi)]
        edges.append(between.max() if between.size else 0.5 * (lo + hi))
    idx = np.searchsorted(np.asarray(edges), grid)
    dx = grid[1] - grid[0]
    masses = np.zeros((density.shape[0], len(minima)))
    for w in range(len(minima)):
        masses[:, w] = density[:, idx == w].sum(axis=1) * dx
    total = masses.sum(axis=1, keepdims=True)
    total[total == 0] = 1.0
    return masses / total


def _grid_half_width(p_el, p_ej, spread):
    return max(8 * math.pi, math.sqrt(2 * (2 * p_ej + spread + 10.0) / p_el) + math.pi)


def _rank_labels(well_of, delocalized, jj=None):
    n = len(well_of)
    jj = np.zeros(n, dtype=int) if jj is None else jj
    counters = {}
    labels = []
    for i in range(n):
        key = (int(well_of[i]), int(jj[i]))
        r = counters.get(key, 0)
        counters[key] = r + 1
        labels.append(StateLabel(int(well_of[i]), r, bool(delocalized[i]), int(jj[i])))
    return labels


def _assign(density, grid, minima, maxima, phi_ext):
    masses = _basin_masses(density, grid, minima, maxima)
    best = masses.argmax(axis=1)
    # Well numbers use phi_ext reduced to [-pi, pi) so labels are 2 pi periodic.
    reduced = phi_ext - 2 * math.pi * math.floor((phi_ext + math.pi) / (2 * math.pi))
    well_ids = np.rint((minima + reduced) / (2 * math.pi)).astype(int)
    return masses, well_ids[best], masses.max(axis=1) < DELOCALIZED_THRESHOLD


def label_states(energies, eigenvectors, p, phi_ext, grid_points=1024):
    """Label single-mode eigenstates by potential well and in-well rank.

    Each state goes to the well holding most of its probability; states with
    less than 0.6 of their mass in any single well are flagged delocalized
    (they keep the argmax well for naming).
    """
    energies = np.asarray(energies)
    dim = eigenvectors.shape[0]
    s = zero_point_phase(p.e_c, p.e_l)
    half = _grid_half_width(p.e_l, p.e_j, float(energies[-1] - energies[0]))
    grid = np.linspace(-half, half, grid_points)
    basis = oscillator_wavefunctions(dim, s, grid)
    amps = eigenvectors.T @ basis
    density = np.abs(amps) ** 2
    minima, maxima = well_extrema(p.e_l, p.e_j, phi_ext, half)
    masses, well_of, deloc = _assign(density, grid, minima, maxima, phi_ext)
    # Real, sign-fixed amplitudes make sampled wavefunctions reproducible.
    amps = amps.real if np.isrealobj(eigenvectors) else amps
    phase_op, charge_op = oscillator_operators(dim, p.e_c, p.e_l)
    v = eigenvectors
    return LabeledSpectrum(
        energies=energies,
        labels=_rank_labels(well_of, deloc),
        phi_ext=float(phi_ext),
        grid=grid,
        density=density,
        charge=v.conj().T @ charge_op @ v,
        phase=v.conj().T @ phase_op @ v,
        well_masses=masses,
        wells=minima,
        params=p,
        eigenvectors=v,
        amplitudes=amps,
    )


def _fix_signs(vecs):
    # Deterministic global phase: largest-magnitude component real positive.
    idx = np.abs(vecs).argmax(axis=0)
    ph = vecs[idx, np.arange(vecs.shape[1])]
    ph = ph / np.abs(ph)
    return vecs / ph


def effective_inductive_energy(p):
    """Static inductive energy seen by the total junction phase.

    Minimizes the multimode quadratic form (without the cosine) at fixed
    ``sum(theta_i)``; reduces to the nanowire's own E_L when all modes are
    retained.
    """
    n = p.n_modes
    a = np.diag(np.asarray(p.e_l_modes, dtype=float))
    a = a - p.e_j * (np.ones((n, n)) - np.eye(n))
    try:
        w = np.linalg.solve(a, np.ones(n))
    except np.linalg.LinAlgError:
        return p.e_l_modes[0]
    denom = float(np.ones(n) @ w)
    if denom <= 0 or np.any(np.linalg.eigvalsh(a) <= 0):
        return p.e_l_modes[0]
    return 1.0 / denom


def label_multimode(energies, eigenvectors, h, p, phi_ext, grid_points=512):
    """Labels for multimode eigenstates.

    The well assignment uses the marginal density of the total junction
    phase; ``jj_photons`` counts excitations of the higher modes.
    """
    dims = h.dims
    e_c = p.e_c_modes
    e_l = p.e_l_modes
    k = eigenvectors.shape[1]
    el_eff = effective_inductive_energy(p)
    half = _grid_half_width(el_eff, p.e_j, float(energies[-1] - energies[0]))
    grid = np.linspace(-half, half, grid_points)
    dx = grid[1] - grid[0]
    s0 = zero_point_phase(e_c[0], e_l[0])
    g0 = np.linspace(-half, half, grid_points)
    b0 = oscillator_wavefunctions(dims[0], s0, g0)
    rest = int(np.prod(dims[1:]))
    if len(dims) == 1:
        density = np.abs(eigenvectors.T @ b0) ** 2
    else:
        # Sample the higher modes on their own grids and histogram the
        # summed phase onto the output grid.
        grids, bases = [], []
        for i in range(1, len(dims)):
            si = zero_point_phase(e_c[i], e_l[i])
            gi = np.linspace(-7 * si * math.sqrt(dims[i]) / 2 - 3 * si, 7 * si * math.sqrt(dims[i]) / 2 + 3 * si, 48)
            grids.append(gi)
            bases.append(oscillator_wavefunctions(dims[i], si, gi))
        b_rest = bases[0]
        g_rest = grids[0]
        w_rest = np.full(g_rest.size, g_rest[1] - g_rest[0])
        for gi, bi in zip(grids[1:], bases[1:]):
            b_rest = np.einsum("ax,by->abxy", b_rest, bi).reshape(b_rest.shape[0] * bi.shape[0], -1)
            g_rest = np.add.outer(g_rest, gi).ravel()
            w_rest = np.outer(w_rest, np.full(gi.size, gi[1] - gi[0])).ravel()
        density = np.zeros((k, grid_points))
        total_phase = np.add.outer(g0, g_rest)
        bins = np.clip(np.rint((total_phase - grid[0]) / dx).astype(int), 0, grid_points - 1)
        for j in range(k):
            c = eigenvectors[:, j].reshape(dims[0], rest)
            psi = b0.T @ c @ b_rest
            w = (np.abs(psi) ** 2) * w_rest[None, :] * (g0[1] - g0[0])
            density[j] = np.bincount(bins.ravel(), weights=w.ravel(), minlength=grid_points) / dx
    minima, maxima = well_extrema(el_eff, p.e_j, phi_ext, half)
    masses, well_of, deloc = _assign(density, grid, minima, maxima, phi_ext)
    v = eigenvectors
    # Excitations of the higher modes are counted relative to their
    # state-dependent static displacement: <a^dag a> - |<a>|^2.
    jj = np.zeros(k, dtype=int)
    for i in range(1, len(dims)):
        occ = np.real(np.einsum("ij,ik,kj->j", v.conj(), h.ops[f"number{i}"], v))
        disp = np.einsum("ij,ik,kj->j", v.conj(), h.ops[f"lower{i}"], v)
        jj += np.rint(np.maximum(occ - np.abs(disp) ** 2, 0.0)).astype(int)
    return LabeledSpectrum(
        energies=np.asarray(energies),
        labels=_rank_labels(well_of, deloc, jj),
        phi_ext=float(phi_ext),
        grid=grid,
        density=density,
        charge=v.conj().T @ h.ops["charge"] @ v,
        phase=v.conj().T @ h.ops["phase"] @ v,
        well_masses=masses,
        wells=minima,
        params=p,
        eigenvectors=v,
    )


def solve(p, phi_ext, k=10, dim=None, dims=None):
    """Build, diagonalize and label in one call."""
    if isinstance(p, TwoModeParams):
        h = build_two_mode_hamiltonian(p, phi_ext, dims)
        vals, vecs = diagonalize(h, k)
        vecs = _fix_signs(vecs)
        return label_multimode(vals, vecs, h, p, phi_ext)
    h = build_single_mode_hamiltonian(p, phi_ext, dim)
    vals, vecs = diagonalize(h, k)
    vecs = _fix_signs(vecs)
    return label_states(vals, vecs, p, phi_ext)


def initial_states(s, temperature=DEFAULT_TEMPERATURE):
    window = THERMAL_WINDOW * const.thermal_energy_ghz(temperature)
    e = np.asarray(s.energies)
    return [int(i) for i in np.flatnonzero(e - e[0] <= window)] or [0]


def _kind(a, b):
    if a.jj_photons != b.jj_photons:
        return "JJ-mode"
    return "plasmon" if a.well_index == b.well_index else "fluxon"


def transition_catalog(s, max_photon=2, temperature=DEFAULT_TEMPERATURE, initial=None):
    """Upward transitions from the ground and thermally reachable states.

    An order-``p`` line is listed when the ``p``-th power of the charge
    operator connects the two levels (parity-forbidden lines drop out), and
    is placed at ``(E_j - E_i) / p``.
    """
    if initial is None:
        initial = initial_states(s, temperature)
    n = np.asarray(s.charge)
    powers = [None, np.abs(n)]
    acc = n
    for _ in range(2, max_photon + 1):
        acc = acc @ n
        powers.append(np.abs(acc))
    out = []
    e = s.energies
    for i in initial:
        for j in range(i + 1, len(e)):
            delta = float(e[j] - e[i])
            if delta <= 0:
                continue
            for order in range(1, max_photon + 1):
                if powers[order][i, j] <= SELECTION_TOL:
                    continue
                out.append(TransitionRecord(
                    from_label=s.labels[i], to_label=s.labels[j],
                    frequency=delta / order, photon_order=order,
                    dipole_n=float(abs(s.charge[i, j])), dipole_phi=float(abs(s.phase[i, j])),
                    kind=_kind(s.labels[i], s.labels[j]), from_index=i, to_index=j))
    return out


def _sweep_point(args):
    p, phi, k, max_photon, temperature, dim, dims = args
    s = solve(p, phi, k=k, dim=dim, dims=dims)
    return s, transition_catalog(s, max_photon, temperature)


def flux_sweep(p, flux_grid, k=10, max_photon=2, temperature=DEFAULT_TEMPERATURE,
               threads=1, dim=None, dims=None, keep_spectra=False):
    """Transition catalogs over a flux grid, ordered by grid index.

    Each point is independent; failures are recorded in ``errors`` under the
    grid index and leave ``None`` in place of that catalog.
    """
    grid = np.asarray(list(flux_grid), dtype=float)
    if grid.size == 0:
        raise ValueError("flux grid is empty")
    if dim is None and isinstance(p, SingleModeParams):
        # One convergence check for the whole sweep, at the first point.
        dim = build_single_mode_hamiltonian(p, float(grid[0])).dims[0]
    tasks = [(p, float(phi), k, max_photon, temperature, dim, dims) for phi in grid]

    def run(task):
        try:
            return _sweep_point(task), None
        except Exception as exc:  # recorded per point, sweep continues
            return (None, None), exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]
    catalogs, spectra, errors = [], [], {}
    for idx, ((s, cat), err) in enumerate(results):
        catalogs.append(cat)
        spectra.append(s if keep_spectra else None)
        if err is not None:
            errors[idx] = f"{type(err).__name__}: {err}"
    return SweepResult(flux_grid=grid, catalogs=catalogs, spectra=spectra, errors=errors)


def sideband_lines(h_coupled, r, s, photon_cap=1):
    """Joint qubit-resonator lines that change qubit level and photon number by one.

    ``h_coupled`` must come from ``couple_resonator`` applied to the qubit
    Hamiltonian in the eigenbasis of ``s`` (diagonal of ``s.energies``).
    Dressed states are identified with the bare product state of largest
    overlap. Blue lines start from ``|i, 0>`` and end in ``|j, 1>``; red lines
    start from ``|i, 1>`` and end in ``|j, 0>``.
    """
    dq, nf = h_coupled.dims
    vals, vecs = sla.eigh(h_coupled.elements)
    bare = np.abs(vecs) ** 2
    # Greedy one-to-one assignment, strongest overlaps first.
    order = np.dstack(np.unravel_index(np.argsort(-bare, axis=None), bare.shape))[0]
    dressed = {}
    used_b, used_d = set(), set()
    for b, d in order:
        if b in used_b or d in used_d:
            continue
        dressed[int(b)] = float(vals[d])
        used_b.add(b)
        used_d.add(d)
        if len(used_b) == dq * nf:
            break

    def energy(q, m):
        return dressed[q * nf + m]

    out = []
    for i in initial_states(s):
        for j in range(dq):
            if j == i:
                continue
            for m0, m1 in ((0, 1), (1, 0)):
                if max(m0, m1) > min(photon_cap, nf - 1):
                    continue
                f = energy(j, m1) - energy(i, m0)
                if f <= 0:
                    continue
                out.append(TransitionRecord(
                    from_label=s.labels[i], to_label=s.labels[j], frequency=f, photon_order=1,
                    dipole_n=float(abs(s.charge[i, j])), dipole_phi=float(abs(s.phase[i, j])),
                    kind="sideband", from_index=i, to_index=j))
    out.sort(key=lambda t: (t.from_index, t.to_index, t.frequency))
    return out
