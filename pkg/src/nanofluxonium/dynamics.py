"""Driven-dissipative dynamics of a few retained fluxonium levels.

Drives couple through the charge operator: a tone contributes
``amplitude * cos(2 pi f t) * n`` to the lab-frame Hamiltonian (GHz units).
In the multi-rotating frame every tone is assigned one transition; one-photon
tones keep ``amplitude/2 * <b|n|a>`` as the coupling, two-photon tones are
folded to second order through the off-resonant intermediate levels.

Public interfaces take times in seconds and rates in s^-1. Internally the
propagation runs in nanoseconds with angular frequencies in rad/ns.
"""

from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
from scipy.optimize import curve_fit

from . import constants as const
from .circuit import HamiltonianMatrix
from .errors import AssignmentError, ParameterError
from .kernels import lindblad_rk4
from .loss import gamma_capacitive, gamma_inductive

TWO_PI = 2 * math.pi
NS = 1e-9
DEFAULT_AMPLITUDES = {"alpha": 0.010, "beta": 0.020, "gamma": 0.030}
DEFAULT_LEVEL_COUNT = 8
FRAME_TOL = 1e-9


@dataclass
class LevelSystem:
    """Energies (GHz) and junction operators restricted to retained levels."""

    energies: np.ndarray
    charge: np.ndarray
    phase: np.ndarray
    labels: list
    params: object = None
    source_index: tuple = ()

    def __post_init__(self):
        self.energies = np.asarray(self.energies, dtype=float)
        self.charge = np.asarray(self.charge)
        self.phase = np.asarray(self.phase)
        self.labels = [str(l) for l in self.labels]

    @property
    def size(self):
        return len(self.energies)

    def index(self, label):
        if isinstance(label, (int, np.integer)):
            return int(label)
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise KeyError(f"level {label!r} not retained") from None

    @classmethod
    def from_spectrum(cls, s, required=(), count=DEFAULT_LEVEL_COUNT):
        """Retain the ``required`` labels plus the lowest remaining levels up to ``count``."""
        chosen = [s.index(r) for r in required]
        for i in range(len(s.energies)):
            if len(chosen) >= count:
                break
            if i not in chosen:
                chosen.append(i)
        idx = np.array(sorted(chosen))
        return cls(
            energies=np.asarray(s.energies)[idx],
            charge=np.asarray(s.charge)[np.ix_(idx, idx)],
            phase=np.asarray(s.phase)[np.ix_(idx, idx)],
            labels=[str(s.labels[i]) for i in idx],
            params=s.params,
            source_index=tuple(int(i) for i in idx),
        )


def as_system(obj, count=None):
    """Accept a LevelSystem or a labeled spectrum (all of its levels by default)."""
    if isinstance(obj, LevelSystem):
        return obj
    return LevelSystem.from_spectrum(obj, count=count or len(obj.energies))


@dataclass(frozen=True)
class DriveTone:
    """A coherent tone; ``target`` is ``(lower, upper, photon_order)`` or None."""

    frequency: float
    amplitude: float
    target: tuple | None = None
    name: str = ""

    def __post_init__(self):
        if not self.frequency > 0:
            raise ParameterError("tone frequency must be > 0")
        if not self.amplitude >= 0:
            raise ParameterError("tone amplitude must be >= 0")


@dataclass
class DrivePlan:
    tones: list
    level_count: int = DEFAULT_LEVEL_COUNT
    frame: str = "multi-rotating"

    def __post_init__(self):
        if self.level_count < 2:
            raise ParameterError("level_count must be >= 2")
        if self.frame not in ("multi-rotating", "lab"):
            raise ParameterError(f"unknown frame {self.frame!r}")

    def with_frequency(self, index, frequency):
        tones = list(self.tones)
        tones[index] = replace(tones[index], frequency=float(frequency))
        return replace(self, tones=tones)

    def with_amplitude(self, index, amplitude):
        tones = list(self.tones)
        tones[index] = replace(tones[index], amplitude=float(amplitude))
        return replace(self, tones=tones)


@dataclass(frozen=True)
class CollapseOp:
    from_index: int
    to_index: int
    rate: float

    def __post_init__(self):
        if not self.rate >= 0:
            raise ParameterError("collapse rate must be >= 0")


@dataclass
class DensityState:
    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ParameterError("density matrix must be square")
        if abs(np.trace(rho) - 1) > 1e-9:
            raise ParameterError("density matrix must have unit trace")
        if np.max(np.abs(rho - rho.conj().T)) > 1e-9:
            raise ParameterError("density matrix must be Hermitian")
        self.rho = rho

    @classmethod
    def pure(cls, dim, index):
        rho = np.zeros((dim, dim), dtype=complex)
        rho[index, index] = 1.0
        return cls(rho)

    @property
    def populations(self):
        return np.real(np.diag(self.rho))


@dataclass(frozen=True)
class PulseSpec:
    """Gaussian pulse, truncated at ``truncation`` standard deviations."""

    carrier: float
    sigma: float
    target: tuple
    area: float = math.pi
    truncation: float = 4.0
    shape: str = "gaussian"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ParameterError("sigma must be > 0")
        if self.shape != "gaussian":
            raise ParameterError("only Gaussian pulses are supported")

    @property
    def duration(self):
        return 2 * self.truncation * self.sigma


@dataclass
class PopulationMap:
    axis1: np.ndarray
    axis2: np.ndarray
    values: np.ndarray
    flagged: np.ndarray
    metadata: dict = field(default_factory=dict)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    @property
    def populations(self):
        return np.real(np.einsum("tii->ti", self.states))

    def trace_drift(self):
        return float(np.max(np.abs(np.einsum("tii->t", self.states) - 1)))

    def min_eigenvalue(self):
        herm = 0.5 * (self.states + np.conj(np.transpose(self.states, (0, 2, 1))))
        return float(np.linalg.eigvalsh(herm).min())


# -- dissipation ------------------------------------------------------------


def collapse_from_loss(system, m, thermal=True):
    """Relaxation channels for every downward pair from the loss model.

    Each pair uses the inductive plus capacitive rate evaluated with its own
    |<i|phi|j>|^2. With ``thermal`` and T > 0, upward channels follow detailed
    balance.
    """
    system = as_system(system)
    p = system.params
    out = []
    e = system.energies
    kt = const.thermal_energy_ghz(m.temperature) if thermal else 0.0
    for i in range(system.size):
        for j in range(system.size):
            f = e[i] - e[j]
            if f <= 0:
                continue
            me = float(abs(system.phase[i, j]) ** 2)
            rate = gamma_inductive(p.e_l, f, me, m) + gamma_capacitive(p.e_c, f, me, m)
            out.append(CollapseOp(i, j, rate))
            if kt > 0:
                boltz = math.exp(-f / kt)
                if boltz > 0:
                    out.append(CollapseOp(j, i, rate * boltz))
    return out


def injected_collapse(system, fluxon_rate, plasmon_rate, fluxon_pairs=(("g-1", "g0"),)):
    """Hand-set channels: one plasmon rate for in-well rank steps, fluxon rates for given pairs."""
    out = []
    labs = system.labels
    parsed = {}
    for i, lab in enumerate(labs):
        letter, well = lab[0], int(lab[1:].split("+")[0])
        parsed[i] = (well, "gefhijklmn".index(letter) if letter in "gefhijklmn" else 99)
    for i, (wi, ri) in parsed.items():
        for j, (wj, rj) in parsed.items():
            if wi == wj and ri == rj + 1:
                out.append(CollapseOp(i, j, plasmon_rate))
    for a, b in fluxon_pairs:
        if a in labs and b in labs:
            out.append(CollapseOp(labs.index(a), labs.index(b), fluxon_rate))
    return out


def _jump_arrays(collapse, scale=NS):
    jumps = np.array([[c.from_index, c.to_index] for c in collapse], dtype=np.intp).reshape(-1, 2)
    rates = np.array([c.rate * scale for c in collapse], dtype=float)
    return jumps, rates


def dissipator(d, collapse):
    """Lindblad dissipator on row-major vec(rho), in 1/ns."""
    out = np.zeros((d * d, d * d))
    idx = np.arange(d)
    for c in collapse:
        if c.rate == 0:
            continue
        g = c.rate * NS
        f, t = c.from_index, c.to_index
        out[t * d + t, f * d + f] += g
        out[f * d + idx, f * d + idx] -= 0.5 * g
        out[idx * d + f, idx * d + f] -= 0.5 * g
    return out


def liouvillian(h, collapse, diss=None):
    """Lindblad generator acting on row-major vec(rho), in rad/ns."""
    hm = _mat(h)
    d = hm.shape[0]
    eye = np.eye(d)
    gen = -1j * TWO_PI * (np.kron(hm, eye) - np.kron(eye, hm.T))
    return gen + (dissipator(d, collapse) if diss is None else diss)


def _mat(h):
    return h.elements if isinstance(h, HamiltonianMatrix) else np.asarray(h)


def steady_state(h, collapse, degeneracy_tol=1e-10, diss=None):
    """Null vector of the generator normalized to unit trace.

    Returns ``(rho, degenerate)``; ``degenerate`` flags a second
    (numerically) zero singular value.
    """
    gen = liouvillian(h, collapse, diss)
    d = _mat(h).shape[0]
    _, sv, vh = np.linalg.svd(gen)
    vec = vh[-1].conj()
    rho = vec.reshape(d, d)
    rho = rho / np.trace(rho)
    rho = 0.5 * (rho + rho.conj().T)
    degenerate = bool(sv[-2] < degeneracy_tol * max(sv[0], 1.0))
    return rho, degenerate


# -- rotating frame ---------------------------------------------------------


def _resolve_target(system, tone):
    n = system.charge
    e = system.energies
    if tone.target is not None:
        a, b, order = tone.target
        ia, ib = system.index(a), system.index(b)
        if e[ia] > e[ib]:
            ia, ib = ib, ia
        return ia, ib, int(order)
    best = None
    n2 = n @ n
    for order in (1, 2):
        mat = np.abs(n if order == 1 else n2)
        for i in range(system.size):
            for j in range(system.size):
                if e[j] <= e[i] or mat[i, j] < 1e-9:
                    continue
                err = abs(e[j] - e[i] - order * tone.frequency)
                if best is None or err < best[0]:
                    best = (err, i, j, order)
    if best is None:
        raise AssignmentError("no allowed transition for tone")
    return best[1], best[2], best[3]


def detuning_report(system, plan):
    """Detuning (GHz) of each tone from its assigned transition: order * f - (E_b - E_a)."""
    system = as_system(system, plan.level_count)
    out = []
    for tone in plan.tones:
        a, b, order = _resolve_target(system, tone)
        out.append(order * tone.frequency - (system.energies[b] - system.energies[a]))
    return out


def _two_photon_coupling(system, a, b, omega, amp):
    # H_eff[b, a] = sum_k c_bk c_ka * mean(1/(E_a + w - E_k), 1/(E_b - w - E_k))
    e = system.energies
    n = system.charge
    total = 0.0 + 0.0j
    for k in range(system.size):
        if k in (a, b):
            continue
        c1 = 0.5 * amp * n[k, a]
        c2 = 0.5 * amp * n[b, k]
        d1 = e[a] + omega - e[k]
        d2 = e[b] - omega - e[k]
        total += c2 * c1 * 0.5 * (1 / d1 + 1 / d2)
    return total


def _stark_shifts(system, omega, amp, resonant, counter_rotating):
    """Second-order AC Stark shifts of every level from one tone.

    Co-rotating terms on the tone's assigned one-photon edges are resonant
    and excluded; they are kept exactly as couplings instead.
    """
    e = system.energies
    n = system.charge
    shift = np.zeros(system.size)
    for a in range(system.size):
        for k in range(system.size):
            if k == a:
                continue
            c2 = abs(0.5 * amp * n[a, k]) ** 2
            if c2 == 0:
                continue
            up = e[k] > e[a]
            co = (e[a] - e[k] + omega) if up else (e[a] - e[k] - omega)
            ctr = (e[a] - e[k] - omega) if up else (e[a] - e[k] + omega)
            if (min(a, k), max(a, k)) not in resonant:
                shift[a] += c2 / co
            if counter_rotating:
                shift[a] += c2 / ctr
    return shift


def _frame(system, edges):
    """Rotation frequency per level from assigned edges (lower, upper, order, freq)."""
    theta = [None] * system.size
    adj = {i: [] for i in range(system.size)}
    for lo, hi, order, freq in edges:
        adj[lo].append((hi, order * freq, (lo, hi)))
        adj[hi].append((lo, -order * freq, (lo, hi)))
    for root in np.argsort(system.energies):
        root = int(root)
        if theta[root] is not None:
            continue
        theta[root] = float(system.energies[root])
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v, step, edge in adj[u]:
                want = theta[u] + step
                if theta[v] is None:
                    theta[v] = want
                    queue.append(v)
                elif abs(theta[v] - want) > FRAME_TOL * max(1.0, abs(want)):
                    names = f"{system.labels[edge[0]]}-{system.labels[edge[1]]}"
                    raise AssignmentError(
                        f"tone assignment is loop-inconsistent: cycle closing through {names} "
                        f"mismatches by {theta[v] - want:.3e} GHz")
    return np.array(theta)


def effective_hamiltonian(system, plan, stark=True, counter_rotating=False):
    """Time-independent multi-rotating-frame Hamiltonian (GHz).

    Diagonal entries are the detunings accumulated along the tone assignment
    graph plus (optionally) AC Stark shifts; off-diagonals are the assigned
    one- or two-photon couplings. ``ops["frame"]`` holds the rotation
    frequency of every level.
    """
    if plan.frame != "multi-rotating":
        raise ParameterError("effective_hamiltonian needs the multi-rotating frame")
    system = as_system(system, plan.level_count)
    d = system.size
    h = np.zeros((d, d), dtype=complex)
    edges, couplings, resonant = [], [], []
    for tone in plan.tones:
        a, b, order = _resolve_target(system, tone)
        if order not in (1, 2):
            raise ParameterError("only one- and two-photon tones are supported")
        edges.append((a, b, order, tone.frequency))
        if order == 1:
            c = 0.5 * tone.amplitude * system.charge[b, a]
            resonant.append({(a, b)})
        else:
            c = _two_photon_coupling(system, a, b, tone.frequency, tone.amplitude)
            resonant.append(set())
        couplings.append((a, b, c))
    theta = _frame(system, edges)
    diag = system.energies - theta
    if stark:
        for tone, res in zip(plan.tones, resonant):
            if tone.amplitude:
                diag = diag + _stark_shifts(system, tone.frequency, tone.amplitude, res, counter_rotating)
    h[np.diag_indices(d)] = diag
    for a, b, c in couplings:
        h[b, a] += c
        h[a, b] += np.conj(c)
    detunings = [order * f - (system.energies[b] - system.energies[a]) for a, b, order, f in edges]
    return HamiltonianMatrix(elements=h, basis_tag="rotating-levels", dims=(d,),
                             ops={"frame": theta},
                             diagnostics={"edges": edges, "detunings": detunings, "labels": system.labels})


# -- propagation ------------------------------------------------------------


def _spread(h):
    ev = np.linalg.eigvalsh(0.5 * (h + h.conj().T))
    return float(ev.max() - ev.min()) if ev.size else 0.0


def check_step(h, collapse, dt):
    """Raise when ``dt`` does not resolve the fastest scale; returns the scale (rad/s)."""
    scale = TWO_PI * _spread(_mat(h)) * const.GHz
    out = {}
    for c in collapse:
        out[c.from_index] = out.get(c.from_index, 0.0) + c.rate
    scale = max(scale, max(out.values(), default=0.0))
    if scale * dt >= 0.1:
        raise ParameterError(f"dt={dt:.3e} s too coarse; use dt <= {0.1 / scale:.3e} s")
    return scale


def evolve(rho0, h_eff, collapse, duration, dt, method="exact", store_every=1):
    """Lindblad evolution under a time-independent Hamiltonian.

    ``method="exact"`` steps with the exponential of the generator (completely
    positive to rounding); ``"rk4"`` uses the fixed-step kernel.
    """
    rho = rho0.rho if isinstance(rho0, DensityState) else np.asarray(rho0, dtype=complex)
    h = _mat(h_eff)
    check_step(h, collapse, dt)
    n_steps = int(round(duration / dt))
    if n_steps < 1:
        raise ParameterError("duration shorter than one step")
    d = h.shape[0]
    if method == "exact":
        prop = sla.expm(liouvillian(h, collapse) * (dt / NS))
        n_store = n_steps // store_every + 1
        states = np.empty((n_store, d * d), dtype=complex)
        x = rho.ravel().copy()
        states[0] = x
        k = 1
        for i in range(1, n_steps + 1):
            x = prop @ x
            if i % store_every == 0:
                states[k] = x
                k += 1
        states = states.reshape(n_store, d, d)
    elif method == "rk4":
        jumps, rates = _jump_arrays(collapse)
        states = lindblad_rk4(rho, TWO_PI * h, np.zeros((0, d, d), dtype=complex),
                              np.zeros((0, 2 * n_steps + 1)), jumps, rates, dt / NS, n_steps, store_every)
    else:
        raise ParameterError(f"unknown method {method!r}")
    times = np.arange(states.shape[0]) * dt * store_every
    return Trajectory(times=times, states=states)


def evolve_driven(rho0, h0, drives, collapse, duration, dt, store_every=1):
    """RK4 evolution with ``H(t) = h0 + sum_j f_j(t) H_j``.

    ``drives`` is a list of ``(H_j, f_j)`` with ``f_j`` a vectorized function of
    time in seconds. ``dt`` must resolve every term.
    """
    rho = rho0.rho if isinstance(rho0, DensityState) else np.asarray(rho0, dtype=complex)
    n_steps = int(round(duration / dt))
    d = rho.shape[0]
    t_half = np.arange(2 * n_steps + 1) * (0.5 * dt)
    if drives:
        hd = np.array([np.asarray(hj, dtype=complex) for hj, _ in drives]) * TWO_PI
        coeff = np.array([np.broadcast_to(fj(t_half), t_half.shape) for _, fj in drives], dtype=float)
    else:
        hd = np.zeros((0, d, d), dtype=complex)
        coeff = np.zeros((0, 2 * n_steps + 1))
    jumps, rates = _jump_arrays(collapse)
    states = lindblad_rk4(rho, TWO_PI * _mat(h0), hd, coeff, jumps, rates, dt / NS, n_steps, store_every)
    return Trajectory(times=np.arange(states.shape[0]) * dt * store_every, states=states)


# -- maps -------------------------------------------------------------------


def _target_population(rho, target):
    return float(sum(np.real(rho[i, i]) for i in target))


def _map_point(args):
    system, plan, (i1, f1), (i2, f2), collapse, target, stark, diss = args
    pl = plan.with_frequency(i1, f1).with_frequency(i2, f2)
    h = effective_hamiltonian(system, pl, stark=stark)
    rho, degenerate = steady_state(h, collapse, diss=diss)
    return _target_population(rho, target), degenerate


def drive_map(system, base_plan, sweep, collapse, target, threads=1, stark=True):
    """Steady-state target population over a grid of two tone frequencies.

    ``sweep = ((tone_index_1, grid_1), (tone_index_2, grid_2))``; ``values[i, j]``
    is taken at ``grid_1[i], grid_2[j]``. ``target`` is a level label, index or
    a collection of them (populations are summed).
    """
    system = as_system(system, base_plan.level_count)
    (t1, g1), (t2, g2) = sweep
    if t1 == t2:
        raise ParameterError("the two swept tones must differ")
    if isinstance(target, (str, int, np.integer)):
        target = [target]
    tidx = [system.index(t) for t in target]
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    diss = dissipator(system.size, collapse)
    tasks = [(system, base_plan, (t1, a), (t2, b), collapse, tidx, stark, diss) for a in g1 for b in g2]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            res = list(pool.map(_map_point, tasks))
    else:
        res = [_map_point(t) for t in tasks]
    vals = np.array([r[0] for r in res]).reshape(g1.size, g2.size)
    flags = np.array([r[1] for r in res]).reshape(g1.size, g2.size)
    return PopulationMap(axis1=g1, axis2=g2, values=vals, flagged=flags,
                         metadata={"tones": [t1, t2], "target": [system.labels[i] for i in tidx]})


def _refine_peak(y, i):
    if 0 < i < len(y) - 1:
        den = y[i - 1] - 2 * y[i] + y[i + 1]
        if den < 0:
            return i + 0.5 * (y[i - 1] - y[i + 1]) / den
    return float(i)


def column_peaks(pmap, rel=0.1):
    """Local maxima along axis1 in every axis2 column, sub-cell refined.

    Peaks below ``rel`` times the column maximum are dropped.
    """
    g1, g2 = pmap.axis1, pmap.axis2
    step = g1[1] - g1[0]
    xs, ys = [], []
    for j in range(g2.size):
        col = pmap.values[:, j]
        top = col.max()
        if top <= 0:
            continue
        for i in range(1, g1.size - 1):
            if col[i] >= col[i - 1] and col[i] > col[i + 1] and col[i] >= rel * top:
                xs.append(g2[j])
                ys.append(g1[0] + step * _refine_peak(col, i))
    return np.array(xs), np.array(ys)


def ridge_slope(pmap, min_slope=0.1, max_slope=10.0, tol_cells=1.0, rel=0.1):
    """Slope d(axis1)/d(axis2) of the dominant multi-tone ridge.

    Column peaks are searched for the straight line with the most inliers
    (within ``tol_cells`` of axis1 spacing); lines flatter than
    ``min_slope`` are single-tone resonances and are skipped. The slope is
    the least-squares fit over the inliers. Returns ``(slope, xs, ys)``.
    """
    xs, ys = column_peaks(pmap, rel)
    if xs.size < 3:
        raise ParameterError("too few ridge points for a slope")
    tol = tol_cells * abs(pmap.axis1[1] - pmap.axis1[0])
    dx = xs[None, :] - xs[:, None]
    dy = ys[None, :] - ys[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        slopes = dy / dx
    ii, kk = np.nonzero((np.abs(slopes) >= min_slope) & (np.abs(slopes) <= max_slope) & (dx > 0))
    best, best_keep = -1, None
    for i, k in zip(ii, kk):
        keep = np.abs(ys - (ys[i] + slopes[i, k] * (xs - xs[i]))) <= tol
        # one inlier per column
        n = np.unique(xs[keep]).size
        if n > best:
            best, best_keep = n, keep
    if best < 3:
        raise ParameterError("no multi-tone ridge found")
    coef = np.polyfit(xs[best_keep], ys[best_keep], 1)
    for _ in range(3):
        keep = np.abs(ys - np.polyval(coef, xs)) <= tol
        coef = np.polyfit(xs[keep], ys[keep], 1)
    return float(coef[0]), xs[keep], ys[keep]


@dataclass
class RidgeFit:
    """``slope`` is the asymptote of the fitted ridge; ``linear_slope`` a plain line fit."""

    slope: float
    xs: np.ndarray
    ys: np.ndarray
    coarse_slope: float
    linear_slope: float = math.nan
    curvature: float = 0.0
    crossing: float = math.nan


def fit_ridge_asymptote(xs, ys):
    """Fit ``y = y0 + s (x - x0) - K / (x - x0)``: a ridge bent by an avoided crossing.

    Returns ``(s, K, x0)``. Falls back to a straight line (K = 0) when
    the points do not straddle a gap or the fit fails.
    """
    lin = np.polyfit(xs, ys, 1)
    order = np.argsort(xs)
    x = xs[order]
    gaps = np.diff(x)
    if gaps.size == 0 or gaps.max() <= 1.5 * np.median(gaps):
        return float(lin[0]), 0.0, math.nan
    k = int(np.argmax(gaps))
    x0 = 0.5 * (x[k] + x[k + 1])
    model = lambda x, y0, s, kk, x0: y0 + s * (x - x0) - kk / (x - x0)
    try:
        popt, _ = curve_fit(model, xs, ys, p0=(np.polyval(lin, x0), lin[0], 0.0, x0), maxfev=20000)
    except RuntimeError:
        return float(lin[0]), 0.0, math.nan
    if not (x[k] < popt[3] < x[k + 1]):
        return float(lin[0]), 0.0, math.nan
    return float(popt[1]), float(popt[2]), float(popt[3])


def raman_ridge(system, plan, sweep, collapse, target, pmap=None, refine=True, threads=1, **kw):
    """Ridge slope of a two-tone population map, optionally refined below the grid.

    The coarse ridge comes from :func:`ridge_slope` on the map. With
    ``refine`` each inlier is replaced by the bounded maximum of the
    steady-state target population along axis1 within one cell, which
    removes the staircase bias when the ridge is narrower than the grid.
    """
    if pmap is None:
        pmap = drive_map(system, plan, sweep, collapse, target, threads=threads)
    coarse, xs, ys = ridge_slope(pmap, **kw)
    if not refine:
        sl, kk, x0 = fit_ridge_asymptote(xs, ys)
        return RidgeFit(sl, xs, ys, coarse, coarse, kk, x0)
    from scipy.optimize import minimize_scalar

    (t1, _), (t2, _) = sweep
    tgt = [target] if isinstance(target, (str, int, np.integer)) else list(target)
    tidx = [system.index(t) for t in tgt]
    diss = dissipator(system.size, collapse)
    cell = abs(pmap.axis1[1] - pmap.axis1[0])

    def peak(xy):
        x, y = xy
        f = lambda v: -_map_point((system, plan, (t1, v), (t2, x), collapse, tidx, True, diss))[0]
        r = minimize_scalar(f, bounds=(y - cell, y + cell), method="bounded",
                            options={"xatol": 1e-4 * cell})
        return r.x

    pts = list(zip(xs, ys))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fine = np.array(list(pool.map(peak, pts)))
    else:
        fine = np.array([peak(q) for q in pts])
    sl, kk, x0 = fit_ridge_asymptote(xs, fine)
    return RidgeFit(sl, xs, fine, coarse, float(np.polyfit(xs, fine, 1)[0]), kk, x0)


def autler_townes_splitting(system, plan, probe, collapse, target, window, points=401):
    """Peak separation (GHz, in probe frequency) of the doublet on a 1D probe cut.

    ``probe`` is the index of the swept tone, scanned over
    ``center +- window`` around its plan frequency. The two highest local
    maxima of the steady-state target population are refined by bounded
    maximization. Returns ``(splitting, (lower_peak, upper_peak))``.
    """
    from scipy.optimize import minimize_scalar

    tgt = [target] if isinstance(target, (str, int, np.integer)) else list(target)
    tidx = [system.index(t) for t in tgt]
    diss = dissipator(system.size, collapse)
    other = (probe + 1) % len(plan.tones)
    f_other = plan.tones[other].frequency
    center = plan.tones[probe].frequency
    grid = center + np.linspace(-window, window, points)
    pop = lambda v: _map_point((system, plan, (probe, v), (other, f_other), collapse, tidx, True, diss))[0]
    vals = np.array([pop(v) for v in grid])
    peaks = [i for i in range(1, points - 1) if vals[i] >= vals[i - 1] and vals[i] > vals[i + 1]]
    if len(peaks) < 2:
        raise ParameterError("doublet not resolved on the probe cut")
    peaks = sorted(sorted(peaks, key=lambda i: -vals[i])[:2])
    step = grid[1] - grid[0]
    fine = []
    for i in peaks:
        r = minimize_scalar(lambda v: -pop(v), bounds=(grid[i] - step, grid[i] + step), method="bounded",
                            options={"xatol": 1e-6 * step})
        fine.append(float(r.x))
    return fine[1] - fine[0], (fine[0], fine[1])


# -- pulsed protocol --------------------------------------------------------


def _gaussian(sigma, trunc, t0):
    def f(t):
        x = (t - t0 - trunc * sigma) / sigma
        inside = (t >= t0) & (t <= t0 + 2 * trunc * sigma)
        return np.where(inside, np.exp(-0.5 * x * x), 0.0)
    return f


def _gaussian_integral(sigma, trunc, power=1):
    s = sigma / math.sqrt(power)
    return s * math.sqrt(TWO_PI) * math.erf(trunc * math.sqrt(power) / math.sqrt(2))


def pulse_terms(system, pulses, t_start=0.0):
    """Static frame Hamiltonian and envelope-weighted terms for a pulse train.

    Pulses run back to back. Each one-photon pulse contributes a coupling
    linear in its envelope; two-photon pulses and all Stark shifts scale with
    the envelope squared. Amplitudes are set so each pulse has its ``area``.
    """
    tones = [DriveTone(p.carrier, 1.0, p.target) for p in pulses]
    plan = DrivePlan(tones=tones, level_count=system.size)
    zero = effective_hamiltonian(system, DrivePlan([replace(t, amplitude=0.0) for t in tones]), stark=False)
    h0 = zero.elements
    drives = []
    t = t_start
    for p, tone in zip(pulses, tones):
        a, b, order = _resolve_target(system, tone)
        coupling = np.zeros_like(h0)
        if order == 1:
            c = 0.5 * system.charge[b, a]
            coupling[b, a], coupling[a, b] = c, np.conj(c)
            amp = p.area / (TWO_PI * 2 * abs(c) * _gaussian_integral(p.sigma / NS, p.truncation))
            lin, quad = coupling * amp, None
            res = {(a, b)}
        else:
            c = _two_photon_coupling(system, a, b, p.carrier, 1.0)
            coupling[b, a], coupling[a, b] = c, np.conj(c)
            amp2 = p.area / (TWO_PI * 2 * abs(c) * _gaussian_integral(p.sigma / NS, p.truncation, 2))
            amp = math.sqrt(amp2)
            lin, quad = None, coupling * amp2
            res = set()
        stark = np.diag(_stark_shifts(system, p.carrier, amp, res, False)).astype(complex)
        quad = stark if quad is None else quad + stark
        env = _gaussian(p.sigma, p.truncation, t)
        if lin is not None:
            drives.append((lin, env))
        drives.append((quad, lambda x, env=env: env(x) ** 2))
        t += p.duration
    return h0, drives, t - t_start, plan


@dataclass
class PulseT1Result:
    wait_times: np.ndarray
    population: np.ndarray
    signal: np.ndarray
    t1: float
    fit: dict
    prepared: np.ndarray


def dispersive_shifts(system, omega_r, g):
    """Readout proxy: second-order dispersive shift of each level (GHz)."""
    e = system.energies
    n = system.charge
    out = np.zeros(system.size)
    for i in range(system.size):
        for j in range(system.size):
            if i == j:
                continue
            w = e[j] - e[i]
            out[i] += g**2 * abs(n[i, j]) ** 2 * 2 * w / (omega_r**2 - w**2)
    return out


def fit_exponential(t, y, flat_tol=1e-4):
    """Fit ``A exp(-t/T) + C``; returns (T, info).

    Traces whose relative span is below ``flat_tol`` give T = inf; traces
    that both rise and fall are not fitted (T = nan).
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    span = float(y.max() - y.min())
    if span <= flat_tol * max(float(np.abs(y).max()), 1e-12):
        return math.inf, {"status": "no decay", "span": span}
    steps = np.diff(y)
    if (steps > 1e-6 * span).any() and (steps < -1e-6 * span).any():
        return math.nan, {"status": "non-monotonic", "span": span}
    tau0 = (t[-1] - t[0]) / 3
    p0 = (y[0] - y[-1], tau0, y[-1])
    try:
        popt, pcov = curve_fit(lambda x, a, tau, c: a * np.exp(-(x - t[0]) / tau) + c, t, y, p0=p0,
                               maxfev=20000)
    except RuntimeError as exc:
        return math.nan, {"status": "fit failed", "error": str(exc)}
    if not popt[1] > 0:
        return math.nan, {"status": "fit failed", "params": popt.tolist()}
    resid = y - (popt[0] * np.exp(-(t - t[0]) / popt[1]) + popt[2])
    return float(popt[1]), {"status": "ok", "amplitude": float(popt[0]), "offset": float(popt[2]),
                            "rms": float(np.sqrt(np.mean(resid**2))),
                            "sigma_t1": float(np.sqrt(pcov[1, 1])) if np.isfinite(pcov[1, 1]) else math.nan}


def pulse_sequence_t1(system, pulses, collapse, wait_grid, observe="g-1", fit_after=None,
                      readout=None, dt=None):
    """Prepare with a pulse train, then record the decay of ``observe``.

    After the pulses, each wait time is propagated exactly. The single
    exponential fit uses wait times ``>= fit_after`` (default: ten times the
    slowest plasmon-scale lifetime among the channels faster than 1/10 of the
    total span). ``readout=(omega_r, g)`` sets the dispersive proxy signal.
    """
    d = system.size
    rho0 = np.zeros((d, d), dtype=complex)
    rho0[0, 0] = 1.0
    h0, drives, total, _ = pulse_terms(system, pulses)
    if dt is None:
        peak = _spread(h0) + sum(float(np.abs(hj).sum(axis=1).max()) for hj, _ in drives)
        dt = min(0.05 / (TWO_PI * max(peak, 1e-6)) * NS, min(p.sigma for p in pulses) / 200)
    check_step(h0, collapse, dt)
    n_steps = int(math.ceil(total / dt))
    dt = total / n_steps
    traj = evolve_driven(rho0, h0, drives, collapse, total, dt, store_every=n_steps)
    prepared = traj.states[-1]
    gen = liouvillian(h0, collapse)
    wait = np.asarray(wait_grid, dtype=float)
    if wait.size == 0 or (np.diff(wait) < 0).any() or wait[0] < 0:
        raise ParameterError("wait grid must be non-negative and non-decreasing")
    # Sequential exact steps; propagators are shared between equal intervals.
    props = {}
    vec = prepared.ravel()
    states = np.empty((wait.size, d * d), dtype=complex)
    prev = 0.0
    for k, t in enumerate(wait):
        step = float(t - prev)
        if step > 0:
            key = float(f"{step / NS:.10g}")
            if key not in props:
                props[key] = sla.expm(gen * key)
            vec = props[key] @ vec
        states[k] = vec
        prev = float(t)
    states = states.reshape(-1, d, d)
    pops = np.real(np.einsum("tii->ti", states))
    obs = system.index(observe)
    pop = pops[:, obs]
    chi = dispersive_shifts(system, *(readout or (6.08, 0.1)))
    signal = pops @ chi
    if fit_after is None:
        wait_span = wait[-1] - wait[0]
        fast = [c.rate for c in collapse if c.rate > 10.0 / max(wait_span, 1e-30)]
        fit_after = 10.0 / min(fast) if fast else 0.0
    sel = wait >= fit_after
    t1, info = fit_exponential(wait[sel], pop[sel])
    info["fit_after"] = fit_after
    return PulseT1Result(wait_times=wait, population=pop, signal=signal, t1=t1, fit=info,
                         prepared=np.real(np.diag(prepared)))


# -- lab frame --------------------------------------------------------------


def lab_frame_populations(system, plan, collapse, duration, dt=None, average=0.25):
    """Populations averaged over the final ``average`` fraction of a lab-frame run.

    Integrates ``H(t) = diag(E) + sum_i A_i cos(2 pi f_i t) n`` with no
    rotating-wave approximation. Used to validate rotating-frame results.
    """
    e = system.energies - system.energies[0]
    h0 = np.diag(e).astype(complex)
    top = float(e.max()) + sum(t.amplitude * float(np.abs(system.charge).max()) for t in plan.tones)
    if dt is None:
        dt = 0.05 / (TWO_PI * top) * NS
    n_steps = int(math.ceil(duration / dt))
    dt = duration / n_steps
    drives = [(t.amplitude * system.charge, lambda x, f=t.frequency: np.cos(TWO_PI * f * const.GHz * x))
              for t in plan.tones]
    rho0 = np.zeros((system.size, system.size), dtype=complex)
    rho0[0, 0] = 1.0
    n_avg = max(int(n_steps * average), 1)
    store = max(n_avg // 200, 1)
    traj = evolve_driven(rho0, h0, drives, collapse, duration, dt, store_every=store)
    tail = traj.populations[traj.times >= duration - n_avg * dt]
    return tail.mean(axis=0)


def raman_plan(system, amplitudes=None, detuning_alpha=0.0):
    """Three-tone plan g0 -(2 photons)-> f0 -> h0 -> e-1 on resonance.

    ``detuning_alpha`` offsets the alpha tone (GHz, per photon).
    """
    amps = {**DEFAULT_AMPLITUDES, **(amplitudes or {})}
    e = system.energies
    g, f, hh, em = (system.index(x) for x in ("g0", "f0", "h0", "e-1"))
    return DrivePlan(tones=[
        DriveTone(0.5 * (e[f] - e[g]) + detuning_alpha, amps["alpha"], ("g0", "f0", 2), "alpha"),
        DriveTone(e[hh] - e[f], amps["beta"], ("f0", "h0", 1), "beta"),
        DriveTone(e[hh] - e[em], amps["gamma"], ("e-1", "h0", 1), "gamma"),
    ], level_count=system.size)
