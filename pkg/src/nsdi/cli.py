"""Command-line driver: ``nsdi {ground,yields,momenta,ionmom,rates,sweep}``.

Exit status: 0 success, 2 invalid configuration, 3 numerical failure,
4 partial sweep failure.  Failures print one JSON line to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    RunConfig,
    emit_config,
    header_lines,
    load_config,
    resolve_workers,
    validate,
)

log = logging.getLogger("nsdi")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 2, 3, 4
COMMANDS = ("ground", "yields", "momenta", "ionmom", "rates", "sweep")
SWEEPABLE = ("yields", "momenta", "rates")


class NumericalFailure(RuntimeError):
    pass


class PartialFailure(RuntimeError):
    pass


# ---------------------------------------------------------------- helpers

def _soft_core(cfg: RunConfig):
    from .potentials import SoftCoreParams

    return SoftCoreParams(cfg.potential.epsilon, 2.0, cfg.potential.soften_repulsion)


def _pulse(cfg: RunConfig, F0, omega, n_c, phi):
    from .pulse import PulseParams

    return PulseParams(F0, omega, phi, n_c)


def _ground_path(cfg: RunConfig) -> Path:
    if cfg.ground.path:
        return Path(cfg.ground.path)
    return Path(cfg.run.output) / "ground_state.dump"


def ensure_ground_state(cfg: RunConfig, force: bool = False):
    """Load the configured ground state, relaxing and saving it first if missing or mismatched."""
    from .grid import make_grid
    from .groundstate import ConvergenceError, load_ground_state, relax_imaginary_time, save_ground_state

    path = _ground_path(cfg)
    params = _soft_core(cfg)
    if path.exists() and not force:
        psi, meta = load_ground_state(path)
        same = (meta.get("n_points") == cfg.grid.n_points and np.isclose(meta.get("dx"), cfg.grid.dx)
                and np.isclose(meta.get("epsilon"), params.epsilon)
                and meta.get("soften_repulsion") == params.soften_repulsion)
        if same:
            return psi, meta
        if cfg.ground.path:
            raise ConfigError(f"ground state {path} was computed for different grid or potential parameters")
    grid = make_grid(cfg.grid.n_points, cfg.grid.dx)
    try:
        psi, energy = relax_imaginary_time(grid, params, dt_im=cfg.ground.dt_im, tol=cfg.ground.tol)
    except ConvergenceError as exc:
        raise NumericalFailure(str(exc)) from exc
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = save_ground_state(path, psi, energy, params)
    return psi, meta


def _family_key(point):
    _, omega, n_c, phi = point
    return (omega, n_c, phi)


def _families(points):
    out = {}
    for pt in points:
        out.setdefault(_family_key(pt), []).append(pt)
    return out


def _family_tag(cfg: RunConfig, family) -> str:
    omega, n_c, phi = family
    return cfg.point(0.0, omega, n_c, phi).digest()[:12]


def _write_json(path: Path, payload):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ------------------------------------------------------------- per point

def _yields_point(cfg_text: str, ground_path: str, point):
    from .config import parse_config
    from .groundstate import load_ground_state
    from .propagator import AbsorberSpec
    from .yields import RegionPartition, run_yields

    cfg = parse_config(cfg_text)
    psi0, _ = load_ground_state(ground_path)
    F0, omega, n_c, phi = point
    spec = AbsorberSpec.for_grid(psi0.grid, cfg.absorber.x0_fraction, cfg.absorber.exponent)
    rec = run_yields(psi0, _pulse(cfg, F0, omega, n_c, phi), RegionPartition(cfg.partition.a, cfg.partition.b),
                     spec, cfg.run.dt, _soft_core(cfg), cfg.yields.gauge, cfg.yields.stencil)
    closure = float(np.max(np.abs(rec.ledger.closure())))
    return {"row": rec.row(), "closure": closure}


def _momenta_point(cfg_text: str, ground_path: str, point, out_dir: str):
    from .config import parse_config
    from .groundstate import load_ground_state
    from .momenta import run_momenta, write_distribution, write_distribution_text

    cfg = parse_config(cfg_text)
    psi0, _ = load_ground_state(ground_path)
    F0, omega, n_c, phi = point
    pcfg = cfg.point(*point)
    x0 = cfg.absorber.x0_fraction * psi0.grid.half_width
    m = cfg.momenta
    run = run_momenta(psi0, _pulse(cfg, F0, omega, n_c, phi), x0, m.w_cut, m.r_cut, cfg.run.dt, _soft_core(cfg),
                      m.cut_mixed, cut_time=m.cut_time)
    stem = Path(out_dir) / pcfg.digest()
    write_distribution(stem.with_suffix(".dump"), run.distribution, psi0.grid.dx)
    write_distribution_text(stem.with_suffix(".txt"), run.distribution, m.table_step,
                            header_lines(pcfg, "momenta", __version__))
    dist = run.distribution
    summary = {
        "F0": F0, "omega": omega, "n_c": n_c, "phi": phi,
        "mass": dist.mass(),
        "quadrants": dist.quadrant_masses().tolist(),
        "sector_norms_final": run.sector_norms[-1].tolist(),
        "sector_norm_drift": float(run.sector_norms[-1].sum() - run.sector_norms[0].sum()),
    }
    _write_json(stem.with_suffix(".json"), summary)
    return summary


def _rates_point(cfg_text: str, family):
    from .config import parse_config
    from .rates import RateModel, SinePulse, SquarePulse, knee_curves

    cfg = parse_config(cfg_text)
    omega, n_c, phi = family
    r = cfg.rates
    model = RateModel(r.ionization_energy, r.ion_ionization_energy, r.eta, r.ratio, r.w02_mode)
    if r.pulse == "envelope":
        def pulse_at(f):
            return _pulse(cfg, f, omega, n_c, phi)
    elif r.pulse == "sine":
        def pulse_at(f):
            return SinePulse(f, omega, n_c)
    else:
        def pulse_at(f):
            return SquarePulse(f, 2.0 * np.pi * n_c / omega)
    curves = knee_curves(model, pulse_at, cfg.pulse.F0, r.tol)
    return {"rows": curves.rows().tolist(), "f_sat": tuple(curves.f_sat), "f_max": tuple(curves.f_max)}


def _run_pool(tasks, workers: int):
    """Run ``(key, fn, args)`` tasks; returns ``{key: (ok, result_or_message, seconds)}`` in input order."""
    results = {}

    def timed(fn, args):
        t0 = time.perf_counter()
        return fn(*args), time.perf_counter() - t0

    if workers <= 1:
        for key, fn, args in tasks:
            t0 = time.perf_counter()
            try:
                results[key] = (True, fn(*args), time.perf_counter() - t0)
            except Exception as exc:  # noqa: BLE001 - recorded per point
                log.debug("point %s failed\n%s", key, traceback.format_exc())
                results[key] = (False, f"{type(exc).__name__}: {exc}", time.perf_counter() - t0)
        return results
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [(key, pool.submit(fn, *args), time.perf_counter()) for key, fn, args in tasks]
        for key, fut, t0 in futures:
            try:
                results[key] = (True, fut.result(), time.perf_counter() - t0)
            except Exception as exc:  # noqa: BLE001
                results[key] = (False, f"{type(exc).__name__}: {exc}", time.perf_counter() - t0)
    return results


def _write_status(out: Path, results: dict, labels: dict):
    lines = ["# point status message"]
    for key, (ok, payload, _) in results.items():
        msg = "" if ok else " ".join(str(payload).split())
        lines.append(f"{labels[key]} {'ok' if ok else 'failed'} {msg}".rstrip())
    (out / "status.txt").write_text("\n".join(lines) + "\n")


def _write_meta(out: Path, cfg: RunConfig, command: str, results: dict, labels: dict, wall: float):
    _write_json(out / f"{command}_run.json", {
        "command": command,
        "version": __version__,
        "config": emit_config(cfg),
        "wall_time_s": wall,
        "points": {labels[k]: round(v[2], 3) for k, v in results.items()},
    })


def _fail_if_partial(results):
    failed = [k for k, v in results.items() if not v[0]]
    if failed:
        raise PartialFailure(f"{len(failed)} of {len(results)} points failed; see status.txt")


# ------------------------------------------------------------- commands

def cmd_ground(cfg: RunConfig) -> int:
    from .groundstate import ionization_energies

    t0 = time.perf_counter()
    psi, meta = ensure_ground_state(cfg, force=not cfg.ground.path)
    e_i, e_ion = ionization_energies(psi.grid, _soft_core(cfg), meta["E_g"])
    out = Path(cfg.run.output)
    out.mkdir(parents=True, exist_ok=True)
    summary = dict(meta, E_I=e_i, E_I_ion=e_ion, version=__version__, config=emit_config(cfg, physical_only=True),
                   wall_time_s=time.perf_counter() - t0)
    _write_json(out / "ground_summary.json", summary)
    print(f"E_g = {meta['E_g']:.10f}  E_I = {e_i:.6f}  E_I+ = {e_ion:.6f}")
    return EXIT_OK


def cmd_yields(cfg: RunConfig, workers: int = 1) -> int:
    from .yields import find_f_max, find_f_sat, write_sweep_table

    out = Path(cfg.run.output)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    ensure_ground_state(cfg)
    ground = str(_ground_path(cfg))
    points = cfg.pulse_points()
    text = emit_config(cfg)
    labels = {pt: cfg.point(*pt).digest() for pt in points}
    results = _run_pool([(pt, _yields_point, (text, ground, pt)) for pt in points], workers)
    (out / "points").mkdir(exist_ok=True)
    summary = ["# omega n_c phi table F_sat F_sat_in_range F_max F_max_in_range"]
    for family, pts in _families(points).items():
        done = [pt for pt in pts if results[pt][0]]
        rows = np.array([results[pt][1]["row"] for pt in done]) if done else np.empty((0, 6))
        for pt in done:
            write_sweep_table(out / "points" / f"{labels[pt]}.txt", [results[pt][1]["row"]],
                              header_lines(cfg.point(*pt), "yields", __version__))
        tag = _family_tag(cfg, family)
        fcfg = cfg.point(0.0, *family).with_values({"pulse.F0": tuple(pt[0] for pt in pts)})
        table = f"yields_{tag}.txt"
        write_sweep_table(out / table, rows, header_lines(fcfg, "yields", __version__))
        fs = find_f_sat(rows[:, 0], rows[:, 5]) if len(rows) else None
        fm = find_f_max(rows[:, 0], rows[:, 1]) if len(rows) >= 3 else None
        summary.append(" ".join([
            repr(family[0]), str(family[1]), repr(family[2]), table,
            f"{fs.value:.17g}" if fs else "nan", str(bool(fs and fs.in_range)).lower(),
            f"{fm.value:.17g}" if fm else "nan", str(bool(fm and fm.in_range)).lower(),
        ]))
    (out / "yields_summary.txt").write_text("\n".join(summary) + "\n")
    _write_status(out, results, labels)
    _write_meta(out, cfg, "yields", results, labels, time.perf_counter() - t0)
    _fail_if_partial(results)
    return EXIT_OK


def cmd_momenta(cfg: RunConfig, workers: int = 1) -> dict:
    out = Path(cfg.run.output)
    mdir = out / "momenta"
    mdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    ensure_ground_state(cfg)
    ground = str(_ground_path(cfg))
    points = cfg.pulse_points()
    text = emit_config(cfg)
    labels = {pt: cfg.point(*pt).digest() for pt in points}
    todo = [pt for pt in points if not (mdir / f"{labels[pt]}.dump").exists()]
    results = _run_pool([(pt, _momenta_point, (text, ground, pt, str(mdir))) for pt in todo], workers)
    for pt in points:
        if pt not in results:
            results[pt] = (True, json.loads((mdir / f"{labels[pt]}.json").read_text()), 0.0)
    results = {pt: results[pt] for pt in points}
    lines = ["# F0 omega n_c phi point DI_mass"]
    for pt in points:
        ok, payload, _ = results[pt]
        mass = f"{payload['mass']:.17g}" if ok else "nan"
        lines.append(f"{pt[0]!r} {pt[1]!r} {pt[2]} {pt[3]!r} {labels[pt]} {mass}")
    (out / "momenta_index.txt").write_text("\n".join(lines) + "\n")
    _write_status(out, results, labels)
    _write_meta(out, cfg, "momenta", results, labels, time.perf_counter() - t0)
    _fail_if_partial(results)
    return labels


def cmd_ionmom(cfg: RunConfig, workers: int = 1) -> int:
    from .momenta import cep_average, gaussian_smooth, ion_momentum_projection, read_distribution, write_spectrum_text

    labels = cmd_momenta(cfg, workers)
    out = Path(cfg.run.output)
    idir = out / "ionmom"
    idir.mkdir(exist_ok=True)
    groups = {}
    for pt, label in labels.items():
        dist = gaussian_smooth(read_distribution(out / "momenta" / f"{label}.dump"), cfg.momenta.sigma_p)
        p_par, rho = ion_momentum_projection(dist)
        write_spectrum_text(idir / f"{label}.txt", p_par, rho, header_lines(cfg.point(*pt), "ionmom", __version__))
        groups.setdefault((pt[0], pt[1], pt[2]), []).append((pt[3], dist))
    for (F0, omega, n_c), members in groups.items():
        if len(members) < 2:
            continue
        avg = cep_average([d for _, d in members])
        p_par, rho = ion_momentum_projection(avg)
        gcfg = cfg.point(F0, omega, n_c, 0.0).with_values({"pulse.phi": tuple(phi for phi, _ in members)})
        head = header_lines(gcfg, "ionmom", __version__) + [f"cep_samples: {len(members)}",
                                                            f"mean_p_par: {avg.mean_parallel_ion_momentum():.17g}"]
        write_spectrum_text(idir / f"cep_{gcfg.digest()}.txt", p_par, rho, head)
    return EXIT_OK


def cmd_rates(cfg: RunConfig, workers: int = 1) -> int:
    from .yields import write_sweep_table

    out = Path(cfg.run.output)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    families = list(_families(cfg.pulse_points()))
    text = emit_config(cfg)
    labels = {fam: _family_tag(cfg, fam) for fam in families}
    results = _run_pool([(fam, _rates_point, (text, fam)) for fam in families], workers)
    summary = ["# omega n_c phi T_p table F_sat F_sat_in_range F_max F_max_in_range"]
    for fam in families:
        ok, payload, _ = results[fam]
        if not ok:
            continue
        table = f"rates_{labels[fam]}.txt"
        fcfg = cfg.point(0.0, *fam).with_values({"pulse.F0": cfg.pulse.F0})
        write_sweep_table(out / table, payload["rows"], header_lines(fcfg, "rates", __version__))
        fs, fm = payload["f_sat"], payload["f_max"]
        summary.append(" ".join([repr(fam[0]), str(fam[1]), repr(fam[2]), f"{2 * np.pi * fam[1] / fam[0]:.17g}",
                                 table, f"{fs[0]:.17g}", str(fs[1]).lower(), f"{fm[0]:.17g}", str(fm[1]).lower()]))
    (out / "rates_summary.txt").write_text("\n".join(summary) + "\n")
    _write_status(out, results, labels)
    _write_meta(out, cfg, "rates", results, labels, time.perf_counter() - t0)
    _fail_if_partial(results)
    return EXIT_OK


def run_command(cmd: str, cfg: RunConfig, target: str | None = None) -> int:
    """Validate and dispatch; exceptions propagate (see :func:`main` for exit codes)."""
    if cmd == "sweep":
        if target not in SWEEPABLE:
            raise ConfigError(f"sweep target must be one of {', '.join(SWEEPABLE)}")
        validate(cfg, target)
        workers = resolve_workers(cfg)
        handler = {"yields": cmd_yields, "momenta": cmd_momenta, "rates": cmd_rates}[target]
        handler(cfg, workers)
        return EXIT_OK
    validate(cfg, cmd)
    if cmd == "ground":
        return cmd_ground(cfg)
    if cmd == "yields":
        return cmd_yields(cfg)
    if cmd == "momenta":
        cmd_momenta(cfg, resolve_workers(cfg))
        return EXIT_OK
    if cmd == "ionmom":
        return cmd_ionmom(cfg, resolve_workers(cfg))
    if cmd == "rates":
        return cmd_rates(cfg)
    raise ConfigError(f"unknown command {cmd!r}")


# ----------------------------------------------------------------- parser

_FLAG_KEYS = {
    "F0": "pulse.F0",
    "omega": "pulse.omega",
    "n_c": "pulse.n_c",
    "phi": "pulse.phi",
    "phi_count": "pulse.phi_count",
    "n_points": "grid.n_points",
    "dx": "grid.dx",
    "dt": "run.dt",
    "gauge": "yields.gauge",
    "ground": "ground.path",
    "output": "run.output",
    "workers": "run.workers",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nsdi", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"nsdi {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name == "sweep":
            p.add_argument("target", choices=SWEEPABLE, help="command to fan out")
            p.add_argument("--grid", action="append", default=[], metavar="KEY=VALUES",
                           help="list-valued parameter to sweep, e.g. pulse.F0=0.1:0.4:0.02")
        p.add_argument("-c", "--config", help="key = value configuration file (or any output table)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any key")
        p.add_argument("--F0", help="peak field(s), list or start:stop:step")
        p.add_argument("--omega", help="carrier frequency (a.u.)")
        p.add_argument("--n-c", dest="n_c", help="number of cycles")
        p.add_argument("--phi", help="carrier-envelope phase(s)")
        p.add_argument("--phi-count", dest="phi_count", help="use phi_j = 2 pi j / count")
        p.add_argument("--n-points", dest="n_points", help="grid points per axis")
        p.add_argument("--dx", help="grid spacing (a.u.)")
        p.add_argument("--dt", help="time step (a.u.)")
        p.add_argument("--gauge", help="yields gauge: length or velocity")
        p.add_argument("--ground", help="ground-state dump to reuse")
        p.add_argument("-o", "--output", help="output directory")
        p.add_argument("-j", "--workers", help="worker processes (sweep); NSDI_WORKERS overrides")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _overrides(args) -> dict:
    values = {}
    for key, cfg_key in _FLAG_KEYS.items():
        v = getattr(args, key, None)
        if v is not None:
            values[cfg_key] = str(v)
    for item in list(getattr(args, "grid", [])) + list(args.set):
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, value = item.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _report(code: int, kind: str, message: str) -> int:
    print(json.dumps({"status": "error", "code": code, "kind": kind, "message": " ".join(str(message).split())}),
          file=sys.stderr)
    return code


def main(argv=None) -> int:
    from .groundstate import ConvergenceError
    from .propagator import GridTooSmallError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        overrides = _overrides(args)
        cfg = load_config(args.config, overrides) if args.config else RunConfig().with_values(overrides)
        return run_command(args.command, cfg, getattr(args, "target", None))
    except (ConfigError, GridTooSmallError, ValueError) as exc:
        return _report(EXIT_VALIDATION, "validation", exc)
    except PartialFailure as exc:
        return _report(EXIT_PARTIAL, "partial", exc)
    except (NumericalFailure, ConvergenceError, FloatingPointError, RuntimeError) as exc:
        return _report(EXIT_NUMERICAL, "numerical", exc)
    except OSError as exc:
        return _report(EXIT_VALIDATION, "io", exc)


if __name__ == "__main__":
    sys.exit(main())
