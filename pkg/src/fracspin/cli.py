"""Command-line entry point.

Every command writes a JSON run manifest next to its output echoing the
parameters and the library version. Exit codes: 0 success, 2 invalid input,
3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .itebd import ConvergenceError, NonInjectiveError

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED = 0, 2, 3

log = logging.getLogger("fracspin")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _write_manifest(out: Path, command: str, params: dict, **results) -> None:
    manifest = {"command": command, "version": __version__, "params": params}
    manifest.update(results)
    Path(f"{out}.manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, Path):
        return str(v)
    raise TypeError(f"cannot serialize {type(v)}")


def _params(args) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k not in ("func",)}


def parse_schedule(text: str):
    """'0.1:2000,0.01:2000' -> ((0.1, 2000), (0.01, 2000))."""
    try:
        return tuple((float(t), int(n)) for t, n in (item.split(":") for item in text.split(",")))
    except ValueError as exc:
        raise ValueError(f"bad tau schedule {text!r}; expected tau:steps[,tau:steps...]") from exc


# commands ---------------------------------------------------------------------


def cmd_groundstate(args) -> int:
    from .itebd import XxzParams, itebd_ground_state, save_imps

    schedule = parse_schedule(args.tau_schedule)
    mps = itebd_ground_state(
        XxzParams(args.delta), args.chi, schedule, tilt=args.tilt, seed=args.seed, tol=args.tol
    )
    save_imps(args.out, mps, {"schedule": [list(s) for s in schedule], "seed": args.seed})
    _write_manifest(args.out, "groundstate", _params(args), energy=mps.energy)
    print(json.dumps({"energy": mps.energy, "chi": mps.chi}))
    return EXIT_OK


def _load_any_state(path):
    from .statefile import read_manifest

    fmt = read_manifest(path).get("format")
    if fmt == "IMPS":
        from .itebd import load_imps

        return "IMPS", load_imps(path)
    if fmt == "MERA3":
        from .mera import load_mera

        return "MERA3", load_mera(path)
    raise ValueError(f"{path}: unknown state format {fmt!r}")


def _sample_one(task):
    path, n, seed, basis, out = task
    fmt, state = _load_any_state(path)
    if fmt == "IMPS":
        from .sampler import sample_infinite_mps

        traj = sample_infinite_mps(state, n, seed, basis)
    else:
        from .mera import sample_mera

        traj = sample_mera(state, n, seed, basis)
    traj.to_csv(out)
    return str(out)


def _trajectory_paths(out: Path, count: int) -> list[Path]:
    if count == 1:
        return [out]
    return [out.with_name(f"{out.stem}_{i:03d}{out.suffix}") for i in range(count)]


def cmd_sample(args) -> int:
    from .sampler import derive_seed

    if args.length < 1:
        raise ValueError("--length must be >= 1")
    outs = _trajectory_paths(args.out, args.count)
    seeds = [args.seed] if args.count == 1 else [derive_seed(args.seed, i) for i in range(args.count)]
    tasks = [(args.state, args.length, s, args.basis, o) for s, o in zip(seeds, outs)]
    _map(_sample_one, tasks, args.jobs)
    _write_manifest(args.out, "sample", _params(args), outputs=[str(o) for o in outs], seeds=seeds)
    return EXIT_OK


def _builtin_model(name: str):
    from .classical import FgnParams, GbpParams, fgn_model, gbp_model
    from .xx_exact import exact_xx_x_model, exact_xx_z_model

    if name == "xx-exact-z":
        return exact_xx_z_model(), "z"
    if name == "xx-exact-x":
        return exact_xx_x_model(), "x"
    kind, _, rest = name.partition(":")
    kw = dict(item.split("=") for item in rest.split(",") if item)
    kw = {k: float(v) for k, v in kw.items()}
    if kind == "fgn":
        return fgn_model(FgnParams(**kw)), None
    if kind == "gbp":
        return gbp_model(GbpParams(**kw)), None
    raise ValueError(f"unknown builtin model {name!r}")


def cmd_variance(args) -> int:
    from .analysis import analytic_curve, log_grid, mps_variance_curve, variance_curve_from_samples
    from .trajectory import Trajectory

    staggered = args.mode == "staggered"
    lengths = None if args.grid == "all" else log_grid(1, args.l_max, args.points)
    sources = args.source
    first = sources[0]
    if len(sources) > 1 or first.endswith(".csv"):
        trajs = [Trajectory.from_csv(p) for p in sources]
        grid = lengths if lengths is not None else np.arange(1, args.l_max + 1)
        curve = variance_curve_from_samples(trajs, args.mode, grid, direction=args.direction)
    elif Path(first).exists():
        fmt, state = _load_any_state(first)
        if fmt != "IMPS":
            raise ValueError("analytic curves need an IMPS state file")
        curve = mps_variance_curve(state, args.direction, staggered, args.l_max, lengths)
    else:
        model, axis = _builtin_model(first)
        if axis is not None and axis != args.direction:
            raise ValueError(f"builtin {first} is a {axis}-direction model")
        curve = analytic_curve(model, args.l_max, staggered, lengths, direction=args.direction)
    curve.to_csv(args.out)
    _write_manifest(args.out, "variance", _params(args), points=int(curve.lengths.size))
    return EXIT_OK


def cmd_fit(args) -> int:
    from .analysis import VarianceCurve, fit_hurst

    curve = VarianceCurve.from_csv(args.curve)
    window = None
    if args.window_min is not None or args.window_max is not None:
        lmax = int(curve.lengths.max())
        window = (args.window_min or max(1, lmax // 10), args.window_max or lmax)
    fit = fit_hurst(curve, window)
    text = fit.to_json(delta=args.delta, direction=curve.direction, mode=curve.mode)
    Path(args.out).write_text(text + "\n")
    _write_manifest(args.out, "fit", _params(args))
    print(text)
    return EXIT_OK


def cmd_classical(args) -> int:
    from .classical import FgnParams, sample_fgn_daviesharte, sample_fgn_hosking

    if args.model != "fgn":
        raise ValueError("only the fgn model has an exact sampler")
    if not 0 < args.hurst < 1:
        raise ValueError(f"Hurst exponent must lie in (0, 1), got {args.hurst}")
    params = FgnParams(args.sigma2, args.hurst)
    sampler = sample_fgn_hosking if args.method == "hosking" else sample_fgn_daviesharte
    traj = sampler(params, args.length, args.seed)
    traj.to_csv(args.out)
    _write_manifest(args.out, "classical", _params(args))
    return EXIT_OK


# desk-scale reproduction -----------------------------------------------------

PROCESSES = (("M_z", "z", False), ("N_z", "z", True), ("M_x", "x", False), ("N_x", "x", True))


def repro_row(delta: float, chi: int, l_max: int, windows: int, seed: int, schedule=None, out_dir: Path | None = None) -> dict:
    """Ground state, samples in both bases, sampled curves and fits for one anisotropy."""
    from .itebd import DEFAULT_SCHEDULE, XxzParams, itebd_ground_state, save_imps

    mps = itebd_ground_state(XxzParams(delta), chi, schedule or DEFAULT_SCHEDULE, require_convergence=False)
    if out_dir is not None:
        save_imps(out_dir / f"state_delta{delta:+.2f}.zip", mps)
    return table_row(mps, delta, l_max, windows, seed, out_dir)


def table_row(mps, delta: float, l_max: int, windows: int, seed: int, out_dir: Path | None = None) -> dict:
    """Sampled variance curves and Hurst fits of the four processes for one ground state.

    Each basis gets one trajectory of ``windows * l_max + 1`` sites; fits use
    the default window [l_max/10, l_max].
    """
    from .analysis import fit_hurst, log_grid, variance_curve_from_samples
    from .sampler import derive_seed, sample_infinite_mps

    length = windows * l_max + 1
    grid = log_grid(max(2, l_max // 30), l_max)
    row = {"delta": delta, "chi": mps.chi, "energy": mps.energy, "l_max": l_max, "windows": windows}
    trajs = {}
    for k, basis in enumerate("zx"):
        trajs[basis] = sample_infinite_mps(mps, length, derive_seed(seed, k), basis)
    for name, basis, staggered in PROCESSES:
        curve = variance_curve_from_samples([trajs[basis]], "staggered" if staggered else "uniform", grid)
        fit = fit_hurst(curve)
        row[name] = {
            "H": fit.hurst,
            "two_H": fit.exponent_2H,
            "log_model_preferred": fit.log_model_preferred,
            "window": list(fit.window),
            "min_windows": int(curve.n_windows[curve.lengths >= fit.window[0]].min()),
        }
        if out_dir is not None:
            curve.to_csv(out_dir / f"curve_{name}_delta{delta:+.2f}.csv")
    return row


def _repro_task(task):
    return repro_row(*task)


def cmd_repro(args) -> int:
    if args.chi > 128:
        raise ValueError("desk-scale reproduction supports chi <= 128")
    args.out.mkdir(parents=True, exist_ok=True)
    deltas = [float(d) for d in args.deltas.split(",")]
    tasks = [(d, args.chi, args.l_max, args.windows, args.seed, None, args.out) for d in deltas]
    rows = _map(_repro_task, tasks, args.jobs)
    table = {"version": __version__, "rows": rows}
    (args.out / "tableIII.json").write_text(json.dumps(table, indent=2, default=_jsonable) + "\n")
    _write_manifest(args.out / "tableIII.json", "repro", _params(args))
    for row in rows:
        cells = []
        for name, _, _ in PROCESSES:
            cell = row[name]
            cells.append("log" if cell["log_model_preferred"] else f"{cell['H']:.2f}")
        print(f"{row['delta']:+.2f}  " + "  ".join(f"{n}={c}" for (n, _, _), c in zip(PROCESSES, cells)))
    return EXIT_OK


def _map(func, tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, tasks))


# parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fracspin", description=__doc__.splitlines()[0])
    p.add_argument("--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("groundstate", help="iTEBD ground state of the XXZ chain")
    g.add_argument("--delta", type=float, required=True)
    g.add_argument("--chi", type=int, required=True)
    g.add_argument("--tau-schedule", default="0.1:2000,0.01:2000,0.001:4000")
    g.add_argument("--tol", type=float, default=1e-10)
    g.add_argument("--tilt", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path, required=True)
    g.set_defaults(func=cmd_groundstate)

    s = sub.add_parser("sample", help="Born-rule samples from an IMPS or MERA3 state file")
    s.add_argument("--state", type=Path, required=True)
    s.add_argument("--length", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--basis", choices=("z", "x"), default="z")
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_sample)

    v = sub.add_parser("variance", help="variance curve from a state, trajectories or a builtin model")
    v.add_argument("--source", nargs="+", required=True)
    v.add_argument("--mode", choices=("uniform", "staggered"), default="uniform")
    v.add_argument("--direction", choices=("z", "x"), default="z")
    v.add_argument("--l-max", type=int, required=True)
    v.add_argument("--grid", choices=("log", "all"), default="log")
    v.add_argument("--points", type=int, default=40)
    v.add_argument("--out", type=Path, required=True)
    v.set_defaults(func=cmd_variance)

    f = sub.add_parser("fit", help="Hurst fit of a variance curve")
    f.add_argument("--curve", type=Path, required=True)
    f.add_argument("--window-min", type=int)
    f.add_argument("--window-max", type=int)
    f.add_argument("--delta", type=float)
    f.add_argument("--out", type=Path, required=True)
    f.set_defaults(func=cmd_fit)

    c = sub.add_parser("classical", help="exact fractional Gaussian noise samples")
    c.add_argument("--model", default="fgn")
    c.add_argument("--method", choices=("hosking", "daviesharte"), default="daviesharte")
    c.add_argument("--hurst", type=float, required=True)
    c.add_argument("--sigma2", type=float, default=1.0)
    c.add_argument("--length", type=int, required=True)
    c.add_argument("--seed", type=int, required=True)
    c.add_argument("--out", type=Path, required=True)
    c.set_defaults(func=cmd_classical)

    repro = sub.add_parser("repro", help="desk-scale reproduction runs")
    rsub = repro.add_subparsers(dest="table", required=True, parser_class=_Parser)
    r = rsub.add_parser("tableIII", help="fitted Hurst exponents across anisotropies")
    r.add_argument("--deltas", default="-0.5,0,0.5")
    r.add_argument("--chi", type=int, default=64)
    r.add_argument("--l-max", type=int, default=300)
    r.add_argument("--windows", type=int, default=10000)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--out", type=Path, required=True)
    r.set_defaults(func=cmd_repro)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConvergenceError, NonInjectiveError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
