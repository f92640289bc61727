"""Command-line entry point: ``combmem <subcommand> --config FILE --output DIR``.

Every subcommand writes its data files plus ``report.json`` (resolved
configuration, seed, versions, results) into the output directory. Exit
status is 0 on success, 2 for invalid input and 3 for numerical failures.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, RunReport, load_config
from .errors import FormatError, InputError, NumericalError, ValidationError

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3


def _out_dir(args) -> Path:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(args, cfg: ExperimentConfig, results, outputs, t0):
    report = RunReport(args.command, cfg.as_dict(), results, cfg.seed,
                       duration_s=time.perf_counter() - t0, outputs=sorted(outputs))
    report.to_json(_out_dir(args) / "report.json")
    return report


def _echo_grid(cfg: ExperimentConfig, device, pulse, after_min=0.0):
    from .dynamics import default_step
    from .model import TimeGrid
    g = cfg.section("grid")
    after = g["after"]
    if after is None:
        after = max(4.0 / device.min_spacing(), after_min)
    step = g["step"] if g["step"] is not None else default_step(device)
    return TimeGrid.around(pulse, after, step, before_fwhm=g["before_fwhm"],
                           max_samples=g["max_samples"])


def cmd_spectrum(args, cfg: ExperimentConfig):
    from .spectral import spectrum_scan
    dev = cfg.require_device()
    s = cfg.section("spectrum")
    start = s["start"] if s["start"] is not None else float(np.min(dev.frequencies)) - s["margin"]
    stop = s["stop"] if s["stop"] is not None else float(np.max(dev.frequencies)) + s["margin"]
    s["start"], s["stop"] = start, stop
    if not start < stop:
        raise ValidationError("spectrum.start must be below spectrum.stop", key="spectrum.stop")
    scan = spectrum_scan(dev, start, stop, s["points"])
    path = _out_dir(args) / "spectrum.csv"
    scan.to_csv(path)
    mins = scan.local_minima()
    mag = scan.magnitude()
    return {"minima_count": int(mins.size),
            "minima_hz": scan.frequencies[mins].tolist(),
            "minima_abs_s11": mag[mins].tolist(),
            "max_abs_s11": float(np.max(mag)),
            "min_abs_s11": float(np.min(mag))}, [path.name]


def cmd_echo(args, cfg: ExperimentConfig):
    from .dynamics import echo_mode_transfer, echo_report, energy_balance_residual, propagate, \
        recovered_energy
    dev = cfg.require_device()
    e = cfg.section("echo")
    group = cfg.group
    spacing = dev.group_spacing(group)
    pulse = cfg.pulse
    horizon = e["horizon"]
    after_min = max((max(e["indices"]) + 1) / spacing, horizon or 0.0)
    grid = _echo_grid(cfg, dev, pulse, after_min)
    traj = propagate(dev, pulse, grid, frame_frequency=cfg.frame_frequency())
    path = _out_dir(args) / "trajectory.csv"
    traj.to_csv(path, verbose=e["verbose"])
    results = {"frame_frequency_hz": traj.frame_frequency,
               "group_spacing_hz": spacing,
               "input_energy": traj.input_energy,
               "energy_balance_residual": energy_balance_residual(traj, dev)
               if traj.input_energy > 0 else 0.0,
               "echoes": [echo_report(traj, spacing, k).as_dict() for k in e["indices"]]}
    if traj.input_energy > 0:
        eta, phi = echo_mode_transfer(traj, spacing, e["indices"][0])
        results["mode_transmissivity"] = eta
        results["mode_phase_rad"] = phi
    if horizon is not None:
        results["recovered_energy"] = recovered_energy(traj, horizon)
        results["horizon_s"] = horizon
    return results, [path.name]


def _matching_problem(cfg: ExperimentConfig):
    from .matching import MatchingProblem
    m = cfg.section("matching")
    band = tuple(m["band"]) if m["band"] is not None else None
    targets = {int(k): float(v) for k, v in m["targets"].items()}
    bounds = {k: tuple(float(x) for x in v) for k, v in m["bounds"].items()}
    try:
        return MatchingProblem(cfg.require_device(), tuple(m["free"]), bounds, m["objective"],
                               band, cfg.pulse, cfg.group, targets, m["tail"])
    except ValidationError as e:
        raise ValidationError(f"matching: {e}", key=f"matching.{e.key}") from None


def _fit_payload(fit, problem):
    from .matching import get_parameter
    d = fit.as_dict()
    d["start_parameters"] = {n: get_parameter(problem.base_device, n, problem.reference_frequency)
                             for n in problem.free_parameters}
    return d


def cmd_match(args, cfg: ExperimentConfig):
    from .matching import analytic_matching_coupling, optimize
    m = cfg.section("matching")
    problem = _matching_problem(cfg)
    fit = optimize(problem, tol=m["tol"], max_evaluations=m["max_evaluations"],
                   restarts=m["restarts"])
    results = _fit_payload(fit, problem)
    dev = problem.base_device
    spacing = dev.group_spacing(cfg.group)
    if spacing is not None:
        g_an = analytic_matching_coupling(spacing, dev.common.external_coupling)
        results["analytic_coupling_hz"] = g_an
        if "g" in fit.parameters:
            results["relative_to_analytic"] = abs(fit.parameters["g"] - g_an) / g_an
    path = _out_dir(args) / "fit.json"
    path.write_text(fit.to_json() + "\n")
    return results, [path.name]


def cmd_fit(args, cfg: ExperimentConfig):
    from .dynamics import read_intensity_csv
    from .matching import fit_trace
    f = cfg.section("fit")
    data = f["data"]
    if data is None:
        raise FormatError("no measured trace given (use --data or fit.data)")
    if not Path(data).is_file():
        raise FormatError(f"data file not found: {data}")
    times, measured = read_intensity_csv(data)
    problem = _matching_problem(cfg)
    fit = fit_trace(times, measured, problem, field_kind=f["field_kind"], tol=f["tol"],
                    max_evaluations=f["max_evaluations"], restarts=f["restarts"],
                    frame_frequency=cfg.frame_frequency())
    results = _fit_payload(fit, problem)
    results["samples"] = int(times.size)
    path = _out_dir(args) / "fit.json"
    path.write_text(fit.to_json() + "\n")
    return results, [path.name]


def _channel(cfg: ExperimentConfig):
    from .tomography import LossRotationChannel, memory_channel
    t = cfg.section("tomography")
    if t["channel"] == "memory":
        return memory_channel(cfg.require_device(), cfg.pulse, cfg.group)
    try:
        return LossRotationChannel(t["transmissivity"], t["rotation"])
    except ValidationError as e:
        raise ValidationError(str(e), key="tomography.transmissivity") from None


def _write_runs(out: Path, runs):
    manifest = []
    names = []
    for i, (alpha, batch) in enumerate(runs):
        name = f"quadratures_{i:03d}.csv"
        batch.to_csv(out / name)
        manifest.append({"alpha_re": float(np.real(alpha)), "alpha_im": float(np.imag(alpha)),
                         "file": name, "temporal_mode_id": batch.temporal_mode_id})
        names.append(name)
    (out / "runs.json").write_text(json.dumps({"runs": manifest}, indent=2) + "\n")
    return names + ["runs.json"]


def _read_runs(path: Path):
    from .tomography import QuadratureBatch
    try:
        manifest = json.loads(path.read_text())["runs"]
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise FormatError(f"cannot read run manifest {path}: {e}") from None
    runs = []
    for entry in manifest:
        try:
            alpha = complex(entry["alpha_re"], entry["alpha_im"])
            batch = QuadratureBatch.from_csv(path.parent / entry["file"],
                                             entry.get("temporal_mode_id", ""))
        except (KeyError, TypeError):
            raise FormatError(f"{path}: malformed run entry {entry!r}") from None
        runs.append((alpha, batch))
    return runs


def cmd_tomo(args, cfg: ExperimentConfig):
    from .tomography import mle_process, simulate_runs
    t = cfg.section("tomography")
    protocol = cfg.protocol()
    out = _out_dir(args)
    outputs = []
    results = {"mode": args.mode, "protocol": protocol.as_dict()}
    channel = None
    if args.mode in ("simulate", "end-to-end"):
        channel = _channel(cfg)
        results["channel"] = {"transmissivity": channel.transmissivity,
                              "phase_rad": channel.phase, "kind": t["channel"]}
        runs = simulate_runs(channel, protocol, cfg.seed, workers=args.workers)
        outputs += _write_runs(out, runs)
    else:
        manifest = Path(args.runs) if args.runs else out / "runs.json"
        runs = _read_runs(manifest)
    if args.mode in ("reconstruct", "end-to-end"):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            tensor = mle_process(runs, protocol.dim, diagonal=t["diagonal"], method=t["method"],
                                 bootstrap=t["bootstrap"], seed=cfg.seed, padding=t["padding"])
        tensor.to_json(out / "process.json")
        outputs.append("process.json")
        P = tensor.population_matrix()
        results["population_matrix"] = P.tolist()
        errs = tensor.population_errors()
        results["population_errors"] = None if errs is None else errs.tolist()
        results["trace_deficits"] = tensor.trace_deficits().tolist()
        results["fit"] = dict(tensor.metadata)
        if channel is not None:
            oracle = channel.population_matrix(protocol.dim)
            results["oracle_population_matrix"] = oracle.tolist()
            results["max_abs_error"] = float(np.max(np.abs(P - oracle)))
    return results, outputs


def cmd_noise(args, cfg: ExperimentConfig):
    from .noise import snr_estimate, temperature_sweep, write_sweep_csv
    n = cfg.section("noise")
    dev = cfg.require_device()
    tls = cfg.tls_model()
    common_tls = tls if n["common_tls"] else None
    pulse = cfg.pulse
    budget = snr_estimate(dev, tls, n["temperature"], n["stored_photons"], pulse, n["group"],
                          common_tls)
    temps = np.geomspace(n["sweep_start"], n["sweep_stop"], n["sweep_points"])
    sweep = temperature_sweep(dev, tls, temps, n["stored_photons"], pulse, n["group"],
                              common_tls)
    path = _out_dir(args) / "noise_sweep.csv"
    write_sweep_csv(sweep, path)
    return {"budget": budget.as_dict(),
            "tls": {"high_power_decay": tls.high_power_decay, "tls_decay": tls.tls_decay,
                    "critical_photon_number": tls.critical_photon_number,
                    "exponent": tls.exponent}}, [path.name]


COMMANDS = {"spectrum": cmd_spectrum, "echo": cmd_echo, "match": cmd_match, "fit": cmd_fit,
            "tomo": cmd_tomo, "noise": cmd_noise}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML experiment configuration")
    common.add_argument("--output", required=True, help="output directory")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                        help="maximum worker threads (default: all cores)")

    p = _Parser(prog="combmem", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("spectrum", parents=[common], help="stationary reflection spectrum")
    s.add_argument("--start", type=float, help="first frequency [Hz]")
    s.add_argument("--stop", type=float, help="last frequency [Hz]")
    s.add_argument("--points", type=int, help="number of frequencies")

    e = sub.add_parser("echo", parents=[common], help="time-domain echo simulation")
    e.add_argument("--echo-index", type=int, action="append", dest="echo_index",
                   help="echo to report (repeatable)")
    e.add_argument("--horizon", type=float, help="report energy recovered within this time [s]")

    m = sub.add_parser("match", parents=[common], help="optimise device parameters")
    m.add_argument("--free", action="append", help="free parameter (repeatable)")
    m.add_argument("--objective", help="objective name")

    f = sub.add_parser("fit", parents=[common], help="fit the model to a measured trace")
    f.add_argument("--data", help="CSV with time_s and abs2_out columns")
    f.add_argument("--free", action="append", help="free parameter (repeatable)")

    t = sub.add_parser("tomo", parents=[common], help="process tomography")
    t.add_argument("--mode", choices=("simulate", "reconstruct", "end-to-end"),
                   default="end-to-end")
    t.add_argument("--runs", help="runs.json manifest to reconstruct from")
    t.add_argument("--bootstrap", type=int, help="bootstrap resamples (0 disables)")

    n = sub.add_parser("noise", parents=[common], help="thermal noise budget")
    n.add_argument("--temperature", type=float, help="operating temperature [K]")
    n.add_argument("--t-start", type=float, dest="t_start", help="sweep start [K]")
    n.add_argument("--t-stop", type=float, dest="t_stop", help="sweep stop [K]")
    n.add_argument("--t-points", type=int, dest="t_points", help="sweep points")
    return p


def _overrides(args):
    o = {"seed": args.seed}
    c = args.command
    if c == "spectrum":
        o.update({"spectrum.start": args.start, "spectrum.stop": args.stop,
                  "spectrum.points": args.points})
    elif c == "echo":
        o.update({"echo.indices": args.echo_index, "echo.horizon": args.horizon})
    elif c == "match":
        o.update({"matching.free": args.free, "matching.objective": args.objective})
    elif c == "fit":
        o.update({"fit.data": args.data, "matching.free": args.free})
    elif c == "tomo":
        o.update({"tomography.bootstrap": args.bootstrap})
    elif c == "noise":
        o.update({"noise.temperature": args.temperature, "noise.sweep_start": args.t_start,
                  "noise.sweep_stop": args.t_stop, "noise.sweep_points": args.t_points})
    return o


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    try:
        if args.workers is not None and args.workers < 1:
            raise ValidationError("--workers must be at least 1", key="workers")
        cfg = load_config(args.config, _overrides(args))
        results, outputs = COMMANDS[args.command](args, cfg)
        _finish(args, cfg, results, outputs, t0)
    except InputError as e:
        print(f"combmem {args.command}: input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as e:
        print(f"combmem {args.command}: input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"combmem {args.command}: numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
