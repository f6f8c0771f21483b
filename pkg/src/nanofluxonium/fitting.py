"""Parameter estimation from two-tone spectroscopy data.

Each data point is matched to a model line: by an index hint ``"i->j"``,
by a state-label hint such as ``"g0->e-1"``, or else to the nearest line
within a gate, with a capped penalty when nothing falls inside it. The
objective is minimized with Nelder-Mead in log-parameter space from
several jittered starts.
"""

from __future__ import annotations

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import constants as const
from .circuit import (
    SingleModeParams,
    TwoModeParams,
    build_single_mode_hamiltonian,
    build_two_mode_hamiltonian,
)
from .errors import ParameterError
from .nanowire import antisymmetric, build_ladder, normal_modes, reduce_topology
from .spectra import solve

GATE = 0.5
DEFAULT_RESTARTS = 8
DEFAULT_JITTER = 0.03
TWO_MODE_DIMS = (30, 8)
MODEL_LEVELS = 8
_INDEX_HINT = re.compile(r"^\s*(\d+)\s*->\s*(\d+)\s*$")


@dataclass(frozen=True)
class SpectroscopyPoint:
    phi_ext: float
    freq: float
    photon_order: int = 1
    label_hint: str | None = None
    weight: float = 1.0

    def __post_init__(self):
        if self.photon_order < 1:
            raise ParameterError("photon_order must be >= 1")
        if not self.weight > 0:
            raise ParameterError("weight must be > 0")
        if not (math.isfinite(self.phi_ext) and math.isfinite(self.freq)):
            raise ParameterError("phi_ext and freq must be finite")


@dataclass
class SpectroscopyDataset:
    points: list

    def __post_init__(self):
        if not self.points:
            raise ParameterError("dataset is empty")
        self.points = [p if isinstance(p, SpectroscopyPoint) else SpectroscopyPoint(*p) for p in self.points]

    def __len__(self):
        return len(self.points)

    @property
    def flux_span(self):
        phis = [p.phi_ext for p in self.points]
        return max(phis) - min(phis)

    def arrays(self):
        return (np.array([p.phi_ext for p in self.points]), np.array([p.freq for p in self.points]),
                np.array([p.photon_order for p in self.points]), np.array([p.weight for p in self.points]))


@dataclass
class FitReport:
    params: object
    residual_rms: float
    residuals: np.ndarray
    iterations: int
    converged: bool
    objective: float
    flux_offset: float = 0.0
    flux_scale: float = 1.0
    history: list = field(default_factory=list)
    restarts: list = field(default_factory=list)
    messages: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)


class FluxFamily:
    """Hamiltonians at any flux from three builds.

    The flux enters only through ``-E_J cos(theta + phi)``, so
    ``H(phi) = H_s + cos(phi) (H(0) - H_s) + sin(phi) (H(pi/2) - H_s)`` with
    ``H_s = (H(0) + H(pi)) / 2``.
    """

    def __init__(self, build):
        h0 = np.asarray(build(0.0))
        hpi = np.asarray(build(math.pi))
        hhalf = np.asarray(build(0.5 * math.pi))
        self.static = 0.5 * (h0 + hpi)
        self.cos = h0 - self.static
        self.sin = hhalf - self.static

    def levels(self, phi, k=None):
        h = self.static + math.cos(phi) * self.cos + math.sin(phi) * self.sin
        return np.linalg.eigvalsh(h)[:k]


def converged_dim(p):
    """Basis size at which ``p`` is converged to 1e-6 GHz near quarter flux."""
    return build_single_mode_hamiltonian(p, -0.5 * math.pi).diagnostics["dim"]


def single_mode_family(p, dim=None):
    dim = dim or converged_dim(p)
    return FluxFamily(lambda phi: build_single_mode_hamiltonian(p, phi, dim=dim).elements)


def two_mode_family(p, dims=TWO_MODE_DIMS):
    return FluxFamily(lambda phi: build_two_mode_hamiltonian(p, phi, dims=dims).elements)


def _initial_count(levels, temperature):
    kt = const.thermal_energy_ghz(temperature) if temperature > 0 else 0.0
    return max(1, int(np.sum(levels - levels[0] <= 3 * kt)))


def _parse_hint(hint):
    if hint is None or hint == "":
        return None
    m = _INDEX_HINT.match(hint)
    if m:
        return ("index", int(m.group(1)), int(m.group(2)))
    parts = [s.strip() for s in hint.split("->")]
    if len(parts) != 2:
        raise ParameterError(f"cannot parse label hint {hint!r}")
    return ("label", parts[0], parts[1])


def match_residuals(levels_at, data, gate=GATE, temperature=0.02, label_solver=None, n_levels=MODEL_LEVELS):
    """Per-point residuals ``f_meas - f_model / order``.

    ``levels_at(phi)`` returns model levels (GHz); ``label_solver(phi)``
    returns a labeled spectrum and is needed only for label hints. Unhinted
    points are matched among lines of the lowest ``n_levels`` levels.
    Points without an admissible line get ``+-gate``.
    """
    out = np.empty(len(data))
    cache = {}
    for n, pt in enumerate(data.points):
        phi = pt.phi_ext
        if phi not in cache:
            cache[phi] = levels_at(phi)
        lev = cache[phi]
        hint = _parse_hint(pt.label_hint)
        if hint is not None:
            if hint[0] == "index":
                i, j = hint[1], hint[2]
                if j >= lev.size or i >= lev.size:
                    out[n] = gate
                    continue
                model = (lev[j] - lev[i]) / pt.photon_order
            else:
                if label_solver is None:
                    raise ParameterError("label hints need a label solver")
                s = label_solver(phi)
                try:
                    model = (s.energies[s.index(hint[2])] - s.energies[s.index(hint[1])]) / pt.photon_order
                except KeyError:
                    out[n] = gate
                    continue
            r = pt.freq - model
            out[n] = r if abs(r) <= gate else math.copysign(gate, r)
            continue
        low = lev[:n_levels]
        n_init = _initial_count(low, temperature)
        lines = np.concatenate([(low[i + 1:] - low[i]) / pt.photon_order for i in range(n_init)])
        lines = lines[lines > 0]
        if lines.size == 0:
            out[n] = gate
            continue
        r = pt.freq - lines
        best = r[np.argmin(np.abs(r))]
        out[n] = best if abs(best) <= gate else math.copysign(gate, best)
    return out


def _objective(resid, weights):
    return float(np.sum(weights * resid**2) / np.sum(weights))


def _run_simplex(fun, x0, maxiter, xatol, fatol):
    history = []
    best = [math.inf]

    def tracked(x):
        f = fun(x)
        if f < best[0]:
            best[0] = f
        return f

    def callback(xk):
        history.append(best[0])

    res = minimize(tracked, x0, method="Nelder-Mead", callback=callback,
                   options={"maxiter": maxiter, "xatol": xatol, "fatol": fatol, "adaptive": len(x0) > 3})
    return res, history


def _multistart(fun, x0, restarts, jitter, seed, threads, maxiter, xatol, fatol):
    rng = np.random.default_rng(seed)
    starts = [np.asarray(x0, dtype=float)]
    for _ in range(restarts - 1):
        starts.append(starts[0] + jitter * rng.standard_normal(starts[0].size))
    run = lambda x: _run_simplex(fun, x, maxiter, xatol, fatol)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(x) for x in starts]
    order = sorted(range(len(results)), key=lambda i: (results[i][0].fun, tuple(results[i][0].x)))
    return results[order[0]], [float(r.fun) for r, _ in results]


def _check_data(data):
    if len(data) < 5:
        raise ParameterError("need at least 5 data points")
    if data.flux_span < 0.3 * 2 * math.pi:
        raise ParameterError("data must span at least 0.3 * 2 pi of flux")


def fit_single_mode(data, init, flux_cal=True, restarts=DEFAULT_RESTARTS, jitter=DEFAULT_JITTER, seed=0,
                    threads=1, dim=None, gate=GATE, maxiter=4000, temperature=0.02):
    """Fit (E_C, E_L, E_J), plus flux offset and scale when ``flux_cal``.

    Model flux is ``scale * phi_data + offset``. The basis size is fixed
    for the whole fit, by default the converged size at ``init``.
    """
    _check_data(data)
    dim = dim or converged_dim(init)
    _, _, _, w = data.arrays()
    needs_labels = any(_parse_hint(p.label_hint) and _parse_hint(p.label_hint)[0] == "label"
                       for p in data.points)

    def unpack(x):
        p = SingleModeParams(e_c=math.exp(x[0]), e_l=math.exp(x[1]), e_j=math.exp(x[2]))
        off, scale = (x[3], math.exp(x[4])) if flux_cal else (0.0, 1.0)
        return p, off, scale

    def residuals(x):
        p, off, scale = unpack(x)
        fam = single_mode_family(p, dim)
        solver = (lambda phi: solve(p, scale * phi + off, k=MODEL_LEVELS, dim=dim)) if needs_labels else None
        return match_residuals(lambda phi: fam.levels(scale * phi + off), data, gate, temperature,
                               (lambda phi: solver(phi)) if solver else None)

    def fun(x):
        try:
            return _objective(residuals(x), w)
        except (ParameterError, ValueError, np.linalg.LinAlgError):
            return gate**2

    x0 = [math.log(init.e_c), math.log(init.e_l), math.log(init.e_j)] + ([0.0, 0.0] if flux_cal else [])
    (res, history), all_f = _multistart(fun, x0, restarts, jitter, seed, threads, maxiter, 1e-6, 1e-11)
    p, off, scale = unpack(res.x)
    r = residuals(res.x)
    msgs = [] if res.success else [str(res.message)]
    return FitReport(params=p, residual_rms=float(np.sqrt(np.mean(r**2))), residuals=r, iterations=int(res.nit),
                     converged=bool(res.success), objective=float(res.fun), flux_offset=float(off),
                     flux_scale=float(scale), history=history, restarts=all_f, messages=msgs)


TOPOLOGY_FIELDS = ("l_nw", "c_nw", "c_0", "c_g", "c_j")


def _topology_model(topo, e_j, count=2):
    p = reduce_topology(topo, e_j, count=count, extrapolate=False)
    return p


def fit_two_mode(data, topo0, e_j0, free=("l_nw", "c_nw", "e_j"), restarts=DEFAULT_RESTARTS,
                 jitter=DEFAULT_JITTER, seed=0, threads=1, dims=TWO_MODE_DIMS, gate=GATE, maxiter=2000,
                 temperature=0.02):
    """Fit free topology parameters (and E_J) through the full reduction pipeline.

    Each evaluation builds the ladder with the junction linearized, reduces
    it to two effective modes and diagonalizes the two-mode Hamiltonian.
    """
    _check_data(data)
    free = tuple(free)
    for name in free:
        if name not in TOPOLOGY_FIELDS + ("e_j",):
            raise ParameterError(f"unknown free parameter {name!r}")
        if name != "e_j" and getattr(topo0, name) <= 0:
            raise ParameterError(f"free parameter {name} must start > 0")
    if not free:
        raise ParameterError("nothing to fit")
    _, freqs, _, w = data.arrays()

    def unpack(x):
        vals = dict(zip(free, np.exp(x)))
        e_j = float(vals.pop("e_j", e_j0))
        return topo0.replace(**{k: float(v) for k, v in vals.items()}), e_j

    def residuals(x):
        topo, e_j = unpack(x)
        fam = two_mode_family(_topology_model(topo, e_j), dims)
        return match_residuals(fam.levels, data, gate, temperature)

    def fun(x):
        try:
            return _objective(residuals(x), w)
        except (ParameterError, ValueError, np.linalg.LinAlgError):
            return gate**2

    start = {**{k: getattr(topo0, k) for k in TOPOLOGY_FIELDS}, "e_j": e_j0}
    x0 = [math.log(start[k]) for k in free]
    (res, history), all_f = _multistart(fun, x0, restarts, jitter, seed, threads, maxiter, 1e-6, 1e-11)
    topo, e_j = unpack(res.x)
    r = residuals(res.x)
    params = _topology_model(topo, e_j)
    msgs = [] if res.success else [str(res.message)]
    modes = antisymmetric(normal_modes(build_ladder(topo, l_j=const.el_to_inductance(e_j))))
    second = modes[1].frequency if len(modes) > 1 else math.nan
    if not (freqs.min() - gate <= second <= freqs.max() + gate):
        msgs.append(f"second antisymmetric mode at {second:.3f} GHz lies outside the data window "
                    f"[{freqs.min():.3f}, {freqs.max():.3f}] GHz")
    extra = {"topology": topo, "e_j": e_j, "l_nw": topo.l_nw, "z_nw": topo.z_nw, "second_mode_GHz": second}
    return FitReport(params=params, residual_rms=float(np.sqrt(np.mean(r**2))), residuals=r,
                     iterations=int(res.nit), converged=bool(res.success), objective=float(res.fun),
                     history=history, restarts=all_f, messages=msgs, extra=extra)


def synthesize_spectroscopy(params, flux_grid, noise_sigma=0.0, seed=0,
                            transitions=tuple((0, j) for j in range(1, MODEL_LEVELS)),
                            hints=True, dim=None, dims=TWO_MODE_DIMS):
    """Noisy transition frequencies of ``params`` (single- or multimode).

    For every flux the listed index transitions are sampled, with
    independent Gaussian noise of ``noise_sigma`` GHz from
    ``numpy.random.default_rng(seed)``. ``hints`` stores ``"i->j"`` hints.
    """
    if noise_sigma < 0:
        raise ParameterError("noise_sigma must be >= 0")
    if isinstance(params, TwoModeParams):
        fam = two_mode_family(params, dims)
    elif isinstance(params, SingleModeParams):
        fam = single_mode_family(params, dim)
    else:
        raise ParameterError("params must be SingleModeParams or TwoModeParams")
    rng = np.random.default_rng(seed)
    points = []
    for phi in flux_grid:
        lev = fam.levels(float(phi))
        for i, j in transitions:
            f = float(lev[j] - lev[i]) + (float(rng.normal(0.0, noise_sigma)) if noise_sigma else 0.0)
            points.append(SpectroscopyPoint(float(phi), f, 1, f"{i}->{j}" if hints else None, 1.0))
    return SpectroscopyDataset(points)


def golden_scan(fun, lo, hi, tol=1e-6):
    """Golden-section minimum of a 1D function on [lo, hi]."""
    from scipy.optimize import minimize_scalar
    r = minimize_scalar(fun, bounds=(lo, hi), method="bounded", options={"xatol": tol})
    return float(r.x), float(r.fun)


def two_mode_objective(data, topo, e_j, dims=TWO_MODE_DIMS, gate=GATE, temperature=0.02):
    """Objective value of a fixed topology; used for 1D scans."""
    _, _, _, w = data.arrays()
    fam = two_mode_family(_topology_model(topo, e_j), dims)
    return _objective(match_residuals(fam.levels, data, gate, temperature), w)

