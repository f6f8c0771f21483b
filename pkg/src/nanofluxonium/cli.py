"""Command-line entry point: ``nanofluxonium <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure (a
``<out>.diagnostics.json`` file is written), 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import dynamics as dyn
from . import io as fio
from .errors import AssignmentError, ConvergenceError, ParameterError
from .fitting import fit_single_mode, fit_two_mode
from .loss import MatrixElementTable, crossover_frequency, fit_quality_factors, t1_point
from .nanowire import (
    antisymmetric,
    build_ladder,
    converged_modes,
    kinetic_inductance,
    normal_modes,
    reduce_topology,
    sheet_inductance,
)
from .constants import el_to_inductance
from .spectra import flux_sweep, solve

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
SWEEP_COLUMNS = ["phi_ext_rad", "from_label", "to_label", "photon_order", "freq_GHz", "dipole_n",
                 "dipole_phi", "kind"]
T1_COLUMNS = ["phi_ext_rad", "freq_GHz", "t1_total_s", "t1_ind_s", "t1_cap_s", "t1_purcell_s"]
BUILTIN_DEVICES = ("device1", "device2", "device3")
# Keys that must not change the config hash.
_UNHASHED = {"threads", "out", "func"}


class NumericalFailure(Exception):
    def __init__(self, message, diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


def _device_path(spec):
    if spec in BUILTIN_DEVICES:
        return resources.files("nanofluxonium") / "devices" / f"{spec}.json"
    return Path(spec)


def _load_device(args):
    if not args.device:
        raise ParameterError("--device is required")
    path = _device_path(args.device)
    if not path.is_file():
        raise ParameterError(f"device file {args.device!r} not found")
    return fio.load_device(path), fio.file_digest(path)


def _input(path, flag):
    if not path:
        raise ParameterError(f"{flag} is required")
    if not Path(path).is_file():
        raise ParameterError(f"{flag} file {path!r} not found")
    return path


def _flux_grid(args, default=(-math.pi, 0.0, 101)):
    start = default[0] if args.flux_start is None else args.flux_start
    stop = default[1] if args.flux_stop is None else args.flux_stop
    n = default[2] if args.flux_points is None else args.flux_points
    if n < 1:
        raise ParameterError("--flux-points must be >= 1")
    return np.linspace(start, stop, n)


def _hashable(args, digests):
    cfg = {k: v for k, v in vars(args).items() if k not in _UNHASHED}
    cfg["files"] = digests
    return cfg


def _pmap(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _model_params(dev, model, e_j=None):
    if model == "single":
        return dev.require("single")
    if dev.two_mode is not None:
        return dev.two_mode
    topo = dev.require("topology")
    ej = e_j if e_j is not None else dev.require("single").e_j
    return reduce_topology(topo, ej, count=2)


# -- commands ---------------------------------------------------------------


def cmd_spectrum(args):
    dev, digest = _load_device(args)
    model = args.model or ("single" if dev.single else "two-mode")
    p = _model_params(dev, model)
    grid = np.sort(_flux_grid(args))
    dims = tuple(args.dims) if args.dims else None
    res = flux_sweep(p, grid, k=args.levels, max_photon=args.max_photon, temperature=args.temperature,
                     threads=args.threads, dims=dims)
    header = fio.provenance("spectrum", _hashable(args, {"device": digest}), args.seed)
    fio.write_csv(args.out, header, SWEEP_COLUMNS, res.rows())
    if res.errors:
        raise NumericalFailure(f"{len(res.errors)} flux points failed",
                               {"failed_points": {str(k): v for k, v in res.errors.items()},
                                "flux": {str(k): float(grid[k]) for k in res.errors}})


def _report_dict(r):
    params = r.params
    pd = fio.single_to_dict(params) if hasattr(params, "e_l") else fio.two_mode_to_dict(params)
    extra = {k: v for k, v in r.extra.items() if k != "topology"}
    if "topology" in r.extra:
        extra["topology"] = fio.topology_to_dict(r.extra["topology"])
    return {"params": pd, "residual_rms_GHz": r.residual_rms, "residuals_GHz": list(map(float, r.residuals)),
            "iterations": r.iterations, "converged": r.converged, "objective": r.objective,
            "flux_offset_rad": r.flux_offset, "flux_scale": r.flux_scale, "restart_objectives": r.restarts,
            "messages": r.messages, "extra": extra}


def cmd_fit(args):
    dev, digest = _load_device(args)
    data = fio.read_dataset(_input(args.data, "--data"))
    digests = {"device": digest, "data": fio.file_digest(args.data)}
    if args.model == "two-mode":
        topo = dev.require("topology")
        e_j = dev.require("single").e_j if dev.single else dev.require("two_mode").e_j
        r = fit_two_mode(data, topo, e_j, free=tuple(args.free.split(",")), restarts=args.restarts,
                         seed=args.seed, threads=args.threads)
    else:
        r = fit_single_mode(data, dev.require("single"), flux_cal=not args.no_flux_cal,
                            restarts=args.restarts, seed=args.seed, threads=args.threads)
    fio.write_json(args.out, fio.provenance("fit", _hashable(args, digests), args.seed), _report_dict(r))
    if not r.converged:
        raise NumericalFailure("fit did not converge", _report_dict(r))


def cmd_modes(args):
    dev, digest = _load_device(args)
    topo = dev.require("topology")
    if args.n_cells:
        topo = topo.replace(n_cells=args.n_cells)
    l_j = None
    if not args.bare:
        l_j = el_to_inductance(dev.require("single").e_j)
    if args.extrapolate:
        modes = converged_modes(topo, l_j=l_j, count=args.count)
    else:
        modes = normal_modes(build_ladder(topo, l_j=l_j))
        if not args.all:
            modes = antisymmetric(modes)
        modes = modes[:args.count]
    rows = [[i, m.symmetry, m.frequency, m.port_difference, m.c_eff, m.l_eff] for i, m in enumerate(modes)]
    header = fio.provenance("modes", _hashable(args, {"device": digest}), args.seed)
    fio.write_csv(args.out, header, ["index", "symmetry", "freq_GHz", "port_difference", "C_eff_F", "L_eff_H"],
                  rows)


def cmd_kinetic(args):
    dev, digest = _load_device(args)
    g = dev.require("geometry")
    l_k = kinetic_inductance(g)
    payload = {"L_k_H": l_k, "squares": g.squares, "sheet_inductance_H": sheet_inductance(l_k, g),
               "n_s_per_m3": g.n_s}
    fio.write_json(args.out, fio.provenance("kinetic", _hashable(args, {"device": digest}), args.seed), payload)


def cmd_t1_curve(args):
    dev, digest = _load_device(args)
    p = dev.require("single")
    m = dev.require("loss")
    grid = np.sort(_flux_grid(args, (-math.pi, -0.3 * math.pi, 71)))
    res = dev.resonator if args.purcell else None
    points = _pmap(lambda phi: t1_point(p, float(phi), m, res), grid, args.threads)
    rows = [[pt.phi_ext, pt.omega_q, pt.rates.t1_total, pt.rates.t1_ind, pt.rates.t1_cap, pt.rates.t1_purcell]
            for pt in points if pt is not None]
    header = fio.provenance("t1-curve", _hashable(args, {"device": digest}), args.seed)
    header["crossover_GHz"] = crossover_frequency(p.e_c, p.e_l, m)
    fio.write_csv(args.out, header, T1_COLUMNS, rows)


def cmd_loss_fit(args):
    dev, digest = _load_device(args)
    pairs, _ = fio.read_t1_data(_input(args.data, "--data"))
    p = dev.require("single")
    m0 = dev.loss or fio.LossModel(3e4, 1.5e4)
    fit = fit_quality_factors(pairs, p, m0, table=MatrixElementTable(p))
    payload = {"Q_L": fit.model.q_l, "Q_C": fit.model.q_c, "temperature_K": fit.model.temperature,
               "covariance": fit.covariance.tolist(), "degenerate": fit.degenerate, "messages": fit.messages,
               "crossover_GHz": crossover_frequency(p.e_c, p.e_l, fit.model),
               "residuals": fit.residuals.tolist()}
    digests = {"device": digest, "data": fio.file_digest(args.data)}
    fio.write_json(args.out, fio.provenance("loss-fit", _hashable(args, digests), args.seed), payload)


def _level_system(dev, args, required):
    p = dev.require("single")
    phi = args.phi_ext if args.phi_ext is not None else (dev.phi_ext if dev.phi_ext is not None
                                                          else -0.46 * math.pi)
    s = solve(p, phi, k=max(12, args.levels))
    return dyn.LevelSystem.from_spectrum(s, required=required, count=args.levels), phi


def _collapse(dev, system, args):
    m = dev.loss or fio.LossModel(39000, 15100)
    col = dyn.collapse_from_loss(system, m, thermal=not args.no_thermal)
    if args.fluxon_rate > 0 and "g-1" in system.labels and "g0" in system.labels:
        col.append(dyn.CollapseOp(system.index("g-1"), system.index("g0"), args.fluxon_rate))
    return col


def _parse_sweep(text, plan):
    try:
        tone, start, stop = text.split(":")
        tone = int(tone)
        start, stop = float(start), float(stop)
    except ValueError as exc:
        raise ParameterError(f"bad sweep {text!r}; expected TONE:START:STOP (GHz offsets)") from exc
    if not 0 <= tone < len(plan.tones):
        raise ParameterError(f"sweep tone {tone} out of range")
    return tone, start, stop


def cmd_drive_map(args):
    dev, digest = _load_device(args)
    digests = {"device": digest}
    required = ("g0", "e0", "f0", "h0", "g-1", "e-1")
    system, phi = _level_system(dev, args, required)
    if args.plan:
        plan = fio.plan_from_dict(fio.load_json(_input(args.plan, "--plan")))
        digests["plan"] = fio.file_digest(args.plan)
    else:
        plan = dyn.raman_plan(system, detuning_alpha=args.alpha_detuning)
    col = _collapse(dev, system, args)
    grid_n = args.grid
    sweeps = []
    for text in (args.sweep1, args.sweep2):
        tone, lo, hi = _parse_sweep(text, plan)
        sweeps.append((tone, plan.tones[tone].frequency + np.linspace(lo, hi, grid_n)))
    target = args.target.split(",")
    pm = dyn.drive_map(system, plan, tuple(sweeps), col, target, threads=args.threads)
    header = fio.provenance("drive-map", _hashable(args, digests), args.seed)
    header.update(grid={"axis1_tone": sweeps[0][0], "axis2_tone": sweeps[1][0], "points": grid_n},
                  phi_ext_rad=phi, target=target, flagged=int(pm.flagged.sum()), plan=fio.plan_to_dict(plan))
    rows = [[pm.axis1[i], pm.axis2[j], pm.values[i, j], bool(pm.flagged[i, j])]
            for i in range(pm.axis1.size) for j in range(pm.axis2.size)]
    fio.write_csv(args.out, header, ["axis1_GHz", "axis2_GHz", "population", "flagged"], rows)


def cmd_pulse_t1(args):
    dev, digest = _load_device(args)
    system, phi = _level_system(dev, args, ("g0", "e0", "f0", "h0", "g-1", "e-1"))
    e = system.energies
    i = system.index
    if args.plasmon_rate > 0:
        col = dyn.injected_collapse(system, args.fluxon_rate, args.plasmon_rate)
    else:
        col = _collapse(dev, system, args)
    pulses = [dyn.PulseSpec(0.5 * (e[i("f0")] - e[i("g0")]), args.sigma, ("g0", "f0", 2)),
              dyn.PulseSpec(e[i("h0")] - e[i("f0")], args.sigma, ("f0", "h0", 1)),
              dyn.PulseSpec(e[i("h0")] - e[i("e-1")], args.sigma, ("e-1", "h0", 1))]
    waits = np.linspace(0.0, args.wait_stop, args.wait_points)
    r = dyn.pulse_sequence_t1(system, pulses, col, waits)
    header = fio.provenance("pulse-t1", _hashable(args, {"device": digest}), args.seed)
    header.update(phi_ext_rad=phi, t1_s=r.t1, fit=r.fit)
    rows = [[t, pop, sig] for t, pop, sig in zip(r.wait_times, r.population, r.signal)]
    fio.write_csv(args.out, header, ["wait_s", "population", "signal"], rows)
    if not (math.isfinite(r.t1) or r.fit.get("status") == "no decay"):
        raise NumericalFailure("exponential fit failed", r.fit)


# -- parser -----------------------------------------------------------------


def _common(p):
    p.add_argument("--device", help="device JSON path or one of: " + ", ".join(BUILTIN_DEVICES))
    p.add_argument("--out", required=True, help="output file")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--flux-start", type=float, default=None, help="radians")
    p.add_argument("--flux-stop", type=float, default=None, help="radians")
    p.add_argument("--flux-points", type=int, default=None)
    p.add_argument("--levels", type=int, default=10, help="eigenlevels retained")
    p.add_argument("--max-photon", type=int, default=2)
    p.add_argument("--grid", type=int, default=41, help="points per map axis")


def build_parser():
    parser = argparse.ArgumentParser(prog="nanofluxonium", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="flux sweep of the transition catalog (CSV)")
    _common(p)
    p.add_argument("--model", choices=("single", "two-mode"), default=None)
    p.add_argument("--dims", type=int, nargs="+", default=None, help="two-mode basis sizes")
    p.add_argument("--temperature", type=float, default=0.02, help="K, selects initial states")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("fit", help="fit spectroscopy data (JSON report)")
    _common(p)
    p.add_argument("--data", help="dataset CSV: phi_ext_rad,freq_GHz,photon_order,label_hint,weight")
    p.add_argument("--model", choices=("single", "two-mode"), default="single")
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--no-flux-cal", action="store_true", help="disable flux offset/scale co-fit")
    p.add_argument("--free", default="l_nw,c_nw,e_j", help="two-mode free parameters")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("modes", help="normal modes of the nanowire ladder (CSV)")
    _common(p)
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--n-cells", type=int, default=None)
    p.add_argument("--bare", action="store_true", help="omit the junction inductance")
    p.add_argument("--all", action="store_true", help="include symmetric modes")
    p.add_argument("--extrapolate", action="store_true", help="continuum-extrapolated antisymmetric modes")
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("kinetic", help="kinetic inductance of the device geometry (JSON)")
    _common(p)
    p.set_defaults(func=cmd_kinetic)

    p = sub.add_parser("t1-curve", help="T1 versus flux from the loss model (CSV)")
    _common(p)
    p.add_argument("--purcell", action="store_true", help="include the resonator Purcell channel")
    p.set_defaults(func=cmd_t1_curve)

    p = sub.add_parser("loss-fit", help="fit Q_L and Q_C to T1 data (JSON)")
    _common(p)
    p.add_argument("--data", help="CSV: freq_GHz,t1_s[,sigma_t1_s]")
    p.set_defaults(func=cmd_loss_fit)

    for name, func, helptext in (("drive-map", cmd_drive_map, "steady-state population map (CSV)"),
                                 ("pulse-t1", cmd_pulse_t1, "three-pulse T1 protocol trace (CSV)")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.set_defaults(levels=8)
        p.add_argument("--phi-ext", type=float, default=None, help="radians (default: device value)")
        p.add_argument("--fluxon-rate", type=float, default=5e4, help="g-1 -> g0 rate, s^-1")
        p.add_argument("--no-thermal", action="store_true")
        if name == "drive-map":
            p.add_argument("--plan", help="drive plan JSON (default: resonant three-tone plan)")
            p.add_argument("--alpha-detuning", type=float, default=0.0, help="GHz per photon")
            p.add_argument("--sweep1", default="0:-0.06:0.06", help="TONE:START:STOP offsets in GHz (axis1)")
            p.add_argument("--sweep2", default="1:-0.1:0.1", help="TONE:START:STOP offsets in GHz (axis2)")
            p.add_argument("--target", default="h0", help="comma-separated level labels")
        else:
            p.add_argument("--plasmon-rate", type=float, default=0.0,
                           help="in-well rate, s^-1 (0: use the loss model)")
            p.add_argument("--sigma", type=float, default=15e-9, help="pulse width, s")
            p.add_argument("--wait-stop", type=float, default=100e-6, help="s")
            p.add_argument("--wait-points", type=int, default=101)
        p.set_defaults(func=func)
    return parser


def _diagnostics_path(out):
    return Path(str(out) + ".diagnostics.json")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        args.func(args)
    except (ParameterError, AssignmentError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, ConvergenceError, np.linalg.LinAlgError, FloatingPointError) as exc:
        diag = getattr(exc, "diagnostics", {}) or {}
        try:
            _diagnostics_path(args.out).write_text(
                json.dumps({"error": f"{type(exc).__name__}: {exc}", "diagnostics": diag}, indent=2,
                           sort_keys=True, default=str) + "\n")
        except OSError:
            pass
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
