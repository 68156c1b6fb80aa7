"""Command-line recipes that regenerate reference data as CSV/JSON.

Exit codes: 0 success, 2 config error, 3 numerical error, 4 insufficient data.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from importlib import resources

import numpy as np

from . import __version__
from .analysis import (FitError, InsufficientDataError, band_gap_from_modes, disorder_report,
                       extract_peaks, fit_bath_parameters, load_devices)
from .eigensolve import (FitError as DecayFitError, eigh, edge_states, fit_localization_length,
                         in_gap_count, localization_length_theory, localized_edge_states)
from .lattice import BathSpec, DisorderModel, EmitterSpec, build_bath, dispersion, sample_disorder
from .montecarlo import (SweepConfig, run_bound_state_sweep,
                         run_transmission_sweep, write_sweep)
from .transmission import SingularSystemError, TransmissionCurve, TransmissionSpec, sweep_curve

log = logging.getLogger("sshbath")

EXIT_CONFIG, EXIT_NUMERICAL, EXIT_DATA = 2, 3, 4
FULL_SCALE_REALIZATIONS = 10_000


class ConfigError(Exception):
    pass


class Output:
    """Tracks files written under ``out_dir`` so an abort can remove them."""

    def __init__(self, out_dir):
        self.out_dir = os.path.abspath(out_dir)
        self.files = []

    def path(self, name):
        p = os.path.abspath(os.path.join(self.out_dir, name))
        if os.path.commonpath([p, self.out_dir]) != self.out_dir:
            raise ConfigError(f"refusing to write outside --out-dir: {name}")
        os.makedirs(os.path.dirname(p), exist_ok=True)
        return p

    def write(self, name, text):
        with open(self.path(name), "w", newline="") as fh:
            fh.write(text)
        self.files.append(name)

    def write_json(self, name, obj):
        self.write(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def cleanup(self):
        for name in self.files:
            try:
                os.remove(os.path.join(self.out_dir, name))
            except FileNotFoundError:
                pass
        self.files = []


# -- config handling ---------------------------------------------------------

def load_config(ref):
    """Read a JSON config from a path or by bundled name (e.g. ``bound_state_ratio133``)."""
    if ref is None:
        return {}
    if os.path.exists(ref):
        with open(ref) as fh:
            text = fh.read()
        source = ref
    else:
        name = ref if ref.endswith(".json") else ref + ".json"
        res = resources.files("sshbath") / "configs" / name
        if not res.is_file():
            raise ConfigError(f"config {ref!r}: no such file or bundled config")
        text = res.read_text()
        source = f"<bundled {name}>"
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")


def _section(cfg, key, builder, *args):
    if key not in cfg:
        raise ConfigError(f"config is missing required section {key!r}")
    try:
        return builder(cfg[key], *args)
    except KeyError as exc:
        raise ConfigError(f"{key}: missing field {exc.args[0]!r}")
    except (TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"{key}: {exc}")


def _bath(cfg):
    return _section(cfg, "bath", BathSpec.from_dict)


def _tspec(cfg, bath):
    if "transmission" not in cfg:
        return TransmissionSpec.default(bath)
    return _section(cfg, "transmission", TransmissionSpec.from_dict, bath)


def _field(cfg, key, default=None, cast=float):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"config is missing required field {key!r}")
        return default
    try:
        return cast(cfg[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: {exc}")


def _csv(header, rows):
    lines = [header]
    for row in rows:
        lines.append(",".join(x if isinstance(x, str) else repr(x) if isinstance(x, float)
                              else str(x) for x in row))
    return "\n".join(lines) + "\n"


# -- subcommands -------------------------------------------------------------

def cmd_dispersion(cfg, opts, out):
    bath = _bath(cfg)
    n = int(opts.get("k_points") or cfg.get("k_points", 501))
    k = np.linspace(-np.pi, np.pi, n)
    lo, hi = dispersion(bath, k)
    out.write("dispersion.csv", _csv("k,omega_minus,omega_plus",
                                     ((float(a), float(b), float(c)) for a, b, c in zip(k, lo, hi))))


def _phase_bath(bath, phase):
    if phase is None:
        return bath
    lo, hi = sorted((bath.j1, bath.j2))
    j1, j2 = (hi, lo) if phase == "trivial" else (lo, hi)
    return BathSpec(bath.n_sites, bath.omega0, j1, j2)


def cmd_spectrum(cfg, opts, out):
    bath = _bath(cfg)
    if opts.get("n"):
        bath = BathSpec(int(opts["n"]), bath.omega0, bath.j1, bath.j2)
    bath = _phase_bath(bath, opts.get("phase"))
    spec = eigh(build_bath(bath))
    half = abs(bath.j1 - bath.j2)
    rows = [(i + 1, float(e), int(abs(e - bath.omega0) < half)) for i, e in enumerate(spec.eigenvalues)]
    out.write("spectrum.csv", _csv("index,eigenvalue_ghz,in_gap", rows))
    out.write_json("spectrum.json", {"bath": bath.to_dict(), "phase": bath.phase,
                                     "eigenvalues": spec.eigenvalues.tolist(),
                                     "in_gap_count": in_gap_count(spec, bath)})


def _edge_outputs(bath, out, prefix):
    even, odd = edge_states(eigh(build_bath(bath)), bath)
    left, right = localized_edge_states(even, odd)
    labels = bath.sublattice()
    rows = [(i + 1, labels[i], float(even.amplitudes[i]), float(odd.amplitudes[i]),
             float(left.amplitudes[i]), float(right.amplitudes[i])) for i in range(bath.n_sites)]
    out.write(f"{prefix}.csv", _csv("site,sublattice,even,odd,left,right", rows))
    summary = {"bath": bath.to_dict(), "even": even.to_dict(), "odd": odd.to_dict(),
               "xi_theory": localization_length_theory(bath.j1, bath.j2)}
    try:
        summary["xi_fit"] = fit_localization_length(left, bath)
    except DecayFitError as exc:
        summary["xi_fit"] = None
        summary["xi_fit_error"] = str(exc)
    out.write_json(f"{prefix}.json", summary)


def cmd_edge_states(cfg, opts, out):
    bath = _bath(cfg)
    ratios = cfg.get("j2_over_j1")
    if not ratios:
        _edge_outputs(bath, out, "edge_states")
        return
    diff = _field(cfg, "j2_minus_j1")
    for r in ratios:
        j1 = diff / (float(r) - 1.0)
        _edge_outputs(BathSpec(bath.n_sites, bath.omega0, j1, j1 * float(r)), out,
                      f"edge_states_ratio_{float(r)!r}")


def _sweep_config(cfg, opts, kind):
    bath = _bath(cfg)
    realizations = int(opts.get("realizations") or cfg.get("realizations", 100))
    seed = int(opts["seed"]) if opts.get("seed") is not None else int(cfg.get("seed", 0))
    if opts.get("eta") is not None:
        etas = [float(opts["eta"])]
    else:
        etas = cfg.get("eta_values")
        if etas is None:
            raise ConfigError("config is missing required field 'eta_values' (or pass --eta)")
    emitter = _section(cfg, "emitter", EmitterSpec.from_dict) if "emitter" in cfg else None
    tspec = None
    if kind == "transmission" or (kind == "auto" and "transmission" in cfg):
        tspec = _tspec(cfg, bath)
        emitter = None
    try:
        return SweepConfig(bath, etas, realizations, seed, emitter=emitter, tspec=tspec)
    except ValueError as exc:
        raise ConfigError(str(exc))


def cmd_bound_state(cfg, opts, out):
    scfg = _sweep_config(cfg, {**opts, "eta": opts.get("eta", 0.0)}, "profile")
    if scfg.emitter is None:
        raise ConfigError("bound-state needs an 'emitter' section")
    (profile,) = run_bound_state_sweep(scfg, threads=opts.get("threads"))
    out.write("bound_state.csv", profile.to_csv())


def cmd_mc_sweep(cfg, opts, out):
    scfg = _sweep_config(cfg, opts, "auto")
    t0 = time.perf_counter()
    if scfg.mode == "transmission":
        results = run_transmission_sweep(scfg, threads=opts.get("threads"))
    else:
        results = run_bound_state_sweep(scfg, threads=opts.get("threads"))
    wall = time.perf_counter() - t0
    names = write_sweep(out.out_dir, scfg, results, wall_time=wall)
    out.files.extend(names)


def cmd_transmission(cfg, opts, out):
    bath = _bath(cfg)
    tspec = _tspec(cfg, bath)
    draw = None
    if "disorder" in cfg:
        model = _section(cfg, "disorder", DisorderModel.from_dict)
        if opts.get("seed") is not None:
            model = DisorderModel(model.sigma, int(opts["seed"]))
        draw = sample_disorder(model, bath.n_sites, 0)
    curve = sweep_curve(bath, draw, tspec)
    out.write("transmission.csv", curve.to_csv())
    peaks = extract_peaks(curve, float(opts.get("min_prominence") or cfg.get("min_prominence", 0.05)))
    summary = {"bath": bath.to_dict(), "phase": bath.phase, "kappa": tspec.kappa,
               "gamma": tspec.gamma, "peaks_ghz": peaks.tolist(),
               "band_gap_theory_ghz": 2 * abs(bath.j1 - bath.j2)}
    if bath.phase == "trivial" and peaks.size >= 4 and peaks.size % 2 == 0:
        summary["band_gap_from_peaks_ghz"] = band_gap_from_modes(peaks, bath)
    out.write_json("transmission_summary.json", summary)


def cmd_stats(cfg, opts, out):
    j1 = _field(cfg, "j1", 163.0)
    j2 = _field(cfg, "j2", 122.0)
    path = opts.get("devices") or cfg.get("devices")
    if path is None:
        devices = load_devices(str(resources.files("sshbath") / "data" / "devices"))
    else:
        if not os.path.isdir(path):
            raise ConfigError(f"devices directory {path!r} does not exist")
        try:
            devices = load_devices(path)
        except ValueError as exc:
            raise ConfigError(str(exc))
    report = disorder_report(devices, j1, j2)
    out.write("disorder_report.json", report.to_json() + "\n")


def cmd_fit(cfg, opts, out):
    curve_path = opts.get("curve") or cfg.get("curve")
    if not curve_path:
        raise ConfigError("fit needs a measured curve (--curve path.csv)")
    try:
        with open(curve_path) as fh:
            curve = TransmissionCurve.from_csv(fh.read())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"curve {curve_path!r}: {exc}")
    bath = _bath(cfg)
    tcfg = dict(cfg.get("transmission", {}))
    tcfg["delta_grid"] = curve.delta_grid
    tspec = _section({"transmission": tcfg}, "transmission", TransmissionSpec.from_dict, bath)
    params = fit_bath_parameters(curve, bath, tspec, fit_gamma=bool(cfg.get("fit_gamma", True)))
    out.write_json("fit.json", params)


COMMANDS = {
    "dispersion": cmd_dispersion,
    "spectrum": cmd_spectrum,
    "edge-states": cmd_edge_states,
    "bound-state": cmd_bound_state,
    "mc-sweep": cmd_mc_sweep,
    "transmission": cmd_transmission,
    "stats": cmd_stats,
    "fit": cmd_fit,
}


def run(command, cfg, opts, out_dir):
    """Execute one subcommand and write ``run_manifest.json``.

    Returns the process exit code.
    """
    out = Output(out_dir)
    t0 = time.perf_counter()
    try:
        os.makedirs(out.out_dir, exist_ok=True)
        COMMANDS[command](cfg, opts, out)
    except ConfigError as exc:
        code, msg = EXIT_CONFIG, f"config error: {exc}"
    except (SingularSystemError, FitError, DecayFitError, np.linalg.LinAlgError) as exc:
        code, msg = EXIT_NUMERICAL, f"numerical error: {exc}"
    except InsufficientDataError as exc:
        code, msg = EXIT_DATA, f"insufficient data: {exc}"
    except (ValueError, KeyError, IndexError) as exc:
        code, msg = EXIT_CONFIG, f"config error: {exc}"
    else:
        manifest = {
            "command": command,
            "config": cfg,
            "options": opts,
            "seed": opts.get("seed"),
            "version": __version__,
            "outputs": list(out.files),
            "wall_time_s": time.perf_counter() - t0,
        }
        out.write_json("run_manifest.json", manifest)
        return 0
    out.cleanup()
    print(f"sshbath {command}: {msg}", file=sys.stderr)
    return code


def replay(manifest_path, out_dir):
    with open(manifest_path) as fh:
        m = json.load(fh)
    return run(m["command"], m["config"], m["options"], out_dir)


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config path or bundled config name")
    common.add_argument("--out-dir", default=".", help="directory for all outputs")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--realizations", type=int, help="disorder realizations per eta")
    common.add_argument("--full-scale", action="store_true",
                        help=f"use {FULL_SCALE_REALIZATIONS} realizations per eta")
    common.add_argument("--threads", type=int, help="worker threads (outputs do not depend on it)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="sshbath", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("dispersion", parents=[common], help="band dispersion over k"
                   ).add_argument("--k-points", type=int)
    sp = sub.add_parser("spectrum", parents=[common], help="finite-bath eigenfrequencies")
    sp.add_argument("--phase", choices=["trivial", "topological"])
    sp.add_argument("--n", type=int)
    sub.add_parser("edge-states", parents=[common], help="hybridized edge modes")
    sp = sub.add_parser("bound-state", parents=[common], help="emitter bound state at one eta")
    sp.add_argument("--eta", type=float, default=0.0)
    sp = sub.add_parser("mc-sweep", parents=[common], help="disorder-averaged sweep over eta")
    sp.add_argument("--eta", type=float, help="run a single eta instead of the config list")
    sp = sub.add_parser("transmission", parents=[common], help="|S21|^2 spectrum")
    sp.add_argument("--min-prominence", type=float)
    sp = sub.add_parser("stats", parents=[common], help="global/local disorder statistics")
    sp.add_argument("--devices", help="directory of device CSV files (default: bundled fixture)")
    sp = sub.add_parser("fit", parents=[common], help="fit bath parameters to a spectrum")
    sp.add_argument("--curve", help="CSV with header delta_ghz,s21_sq")
    sp = sub.add_parser("replay", help="re-run a command from its run_manifest.json")
    sp.add_argument("manifest")
    sp.add_argument("--out-dir", default=".")
    return p


_OPTION_KEYS = ("seed", "realizations", "threads", "k_points", "phase", "n", "eta",
                "min_prominence", "devices", "curve")


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "replay":
        return replay(args.manifest, args.out_dir)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"sshbath {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    opts = {k: getattr(args, k) for k in _OPTION_KEYS if getattr(args, k, None) is not None}
    if args.full_scale:
        opts["realizations"] = FULL_SCALE_REALIZATIONS
    # devices/curve paths are resolved now so a replay from elsewhere still finds them
    for key in ("devices", "curve"):
        if key in opts:
            opts[key] = os.path.abspath(opts[key])
    return run(args.command, cfg, opts, args.out_dir)


if __name__ == "__main__":
    sys.exit(main())
