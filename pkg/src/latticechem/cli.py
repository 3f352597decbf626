"""Command-line surface: reproducible figure-style runs with manifests.

Every run writes CSV data plus a manifest.json capturing the command
line, config snapshot, code version, per-output checksums and wall-clock.
Exit codes: 0 success, 2 validation failure, 3 solver non-convergence.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from latticechem import __version__
from latticechem.lattice import (
    LatticeSpec,
    PotentialKind,
    write_field_binary,
    write_field_csv,
)
from latticechem.mediator import (
    MediatorParams,
    check_conditions,
    effective_interaction_curve,
    renormalized_hopping,
    yukawa_parameters,
)
from latticechem.planner import (
    RatioSchedule,
    critical_ratio,
    single_particle_backend,
    two_electron_backend,
)
from latticechem.single_particle import (
    SolverConvergenceError,
    fit_bohr_radius,
    hydrogen_params,
    hydrogen_scan,
    lowest_eigenpairs,
)
from latticechem.two_electron import molecular_curve

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3


class ValidationError(ValueError):
    pass


def parse_config(path) -> dict:
    """Flat key = value lines; section prefixes use dots (mediator.u = 1)."""
    config = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValidationError(f"{path}:{lineno}: empty key")
        config[key] = value
    return config


def parse_ratio_range(text: str):
    """start:stop:step (inclusive stop within half a step), or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValidationError(f"bad ratio range {text!r}, want start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ValidationError("ratio step must be positive")
        count = int(np.floor((stop - start) / step + 0.5)) + 1
        return [start + i * step for i in range(count)]
    return [float(p) for p in text.split(",") if p]


def parse_int_list(text: str):
    if ":" in text:
        parts = [int(p) for p in text.split(":")]
        if len(parts) == 2:
            parts.append(1)
        start, stop, step = parts
        return list(range(start, stop + 1, step))
    return [int(p) for p in text.split(",") if p]


def parse_schedule(text: str) -> RatioSchedule:
    parts = text.split(":")
    if parts[0] == "linear" and len(parts) == 3:
        return RatioSchedule.linear(float(parts[1]), float(parts[2]))
    if parts[0] == "fixed" and len(parts) == 2:
        return RatioSchedule.fixed(float(parts[1]))
    raise ValidationError(
        f"bad schedule {text!r}; want linear:intercept:slope or fixed:ratio")


def parse_potential(text: str) -> PotentialKind:
    parts = text.split(":")
    if parts[0] == "coulomb" and len(parts) == 1:
        return PotentialKind.coulomb()
    if parts[0] == "yukawa" and len(parts) in (2, 3):
        offset = float(parts[2]) if len(parts) == 3 else 0.0
        return PotentialKind.yukawa(float(parts[1]), offset)
    raise ValidationError(
        f"bad potential {text!r}; want coulomb or yukawa:L[:C]")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                             for v in row) + "\n")


def sha256(path: Path) -> str:
    digest = hashlib.sha256()
    digest.update(path.read_bytes())
    return digest.hexdigest()


class Run:
    """Output directory plus manifest bookkeeping for one invocation."""

    def __init__(self, out_dir: Path, argv, config):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.argv = list(argv)
        self.config = dict(config)
        self.started = time.time()
        self.outputs = []
        self.extra = {}

    @property
    def stem(self) -> str:
        return self.out.resolve().name or "run"

    def path(self, suffix: str) -> Path:
        return self.out / f"{self.stem}{suffix}"

    def record(self, path: Path) -> Path:
        self.outputs.append(Path(path))
        return Path(path)

    def finish(self) -> Path:
        manifest = {
            "command_line": self.argv,
            "config": self.config,
            "version": __version__,
            "outputs": {p.name: sha256(p) for p in self.outputs},
            "wall_clock_s": time.time() - self.started,
        }
        manifest.update(self.extra)
        path = self.out / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return path


def mediator_from_options(opts: dict) -> MediatorParams:
    required = ["j", "jc", "u", "delta", "g", "jf", "nm", "ne"]
    missing = [k for k in required if opts.get(k) is None]
    if missing:
        raise ValidationError(
            "missing mediator parameter(s): " + ", ".join(missing))
    return MediatorParams(
        j=float(opts["j"]), j_c=float(opts["jc"]), u=float(opts["u"]),
        delta=float(opts["delta"]), g=float(opts["g"]), j_f=float(opts["jf"]),
        n_m=int(opts["nm"]), n_e=int(opts["ne"]))


def _merge_mediator(args, config) -> dict:
    keys = ["j", "jc", "u", "delta", "g", "jf", "nm", "ne"]
    merged = {}
    for key in keys:
        flag = getattr(args, key.replace("-", "_"), None)
        if flag is not None:
            merged[key] = flag
        elif f"mediator.{key}" in config:
            merged[key] = config[f"mediator.{key}"]
        else:
            merged[key] = None
    return merged


def cmd_hydrogen_spectrum(args, run: Run) -> int:
    ratios = parse_ratio_range(args.ratios)
    rows = hydrogen_scan(args.n, ratios, k=args.levels, tol=args.tol)
    csv_path = run.record(run.path(".csv"))
    write_csv(csv_path, ["ratio", "level", "energy_ry", "residual"],
              [(r.ratio, r.level, r.energy_ry, r.residual) for r in rows])
    if args.plot_script:
        script = run.record(run.path(".gp"))
        script.write_text(
            "set xlabel 't_F/V_0'\nset ylabel 'E (Ry)'\n"
            f"plot '{csv_path.name}' using 1:3 with points\n")
    return EXIT_OK


def cmd_bohr_fit(args, run: Run) -> int:
    sizes = parse_int_list(args.n)
    ratios = parse_ratio_range(args.ratios)
    rows = []
    for n in sizes:
        lattice = LatticeSpec(n)
        for ratio in ratios:
            params = hydrogen_params(ratio, n)
            spec = lowest_eigenpairs(lattice, params, 1, tol=args.tol)
            fit = fit_bohr_radius(spec.orbitals[0], params)
            rows.append((n, float(ratio), fit.a0, params.bohr_radius,
                         fit.n_bins_used))
    csv_path = run.record(run.path(".csv"))
    write_csv(csv_path, ["n", "ratio", "fitted_a0", "expected_a0", "bins"],
              rows)
    return EXIT_OK


def cmd_mediator_curve(args, run: Run) -> int:
    params = mediator_from_options(_merge_mediator(args, run.config))
    d_values = parse_int_list(args.d)
    curve = effective_interaction_curve(d_values, params, method=args.method)
    csv_path = run.record(run.path(".csv"))
    write_csv(csv_path, ["d", "e_two", "e_one", "v_eff", "yukawa_prediction"],
              [(p.d, p.e_two, p.e_one, p.v_eff, p.yukawa_prediction)
               for p in curve.points])
    run.extra["yukawa"] = {"v0": curve.v0, "c": curve.c,
                           "screening_length": curve.screening_length}
    return EXIT_OK


def cmd_check_conditions(args, run: Run) -> int:
    params = mediator_from_options(_merge_mediator(args, run.config))
    v0, c, length = yukawa_parameters(params)
    t_f = args.tf if args.tf is not None else renormalized_hopping(
        params.j_f, params.n_e)
    v0_eff = args.v0 if args.v0 is not None else v0
    report = check_conditions(params, args.lattice_n, t_f, v0_eff,
                              threshold=args.threshold)
    payload = {
        "margins": report.margins,
        "satisfied": report.satisfied,
        "threshold": report.threshold,
        "all_satisfied": report.all_satisfied,
        "derived": {"v0": v0, "c": c, "screening_length": length, "t_f": t_f},
    }
    json_path = run.record(run.path(".json"))
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    run.extra["condition_report"] = {"all_satisfied": report.all_satisfied,
                                     "satisfied": report.satisfied}
    return EXIT_OK


def _curve_command(args, run: Run) -> int:
    n1, n2 = (int(p) for p in args.basis.split("+"))
    schedule = parse_schedule(args.schedule)
    potential = parse_potential(args.potential)
    d_values = parse_int_list(args.d)
    points, failures = molecular_curve(
        d_values, args.n, schedule, potential, repulsion_scale=args.f,
        n1=n1, n2=n2, nuclear_repulsion=not args.no_nuclear_repulsion)
    csv_path = run.record(run.path(".csv"))
    write_csv(csv_path,
              ["d_lattice", "d_atomic", "ratio", "e_electronic_ry",
               "e_electronic_noc_ry", "e_total_ry", "basis_n", "hf_sweeps"],
              [(p.d_lattice, p.d_atomic, p.ratio, p.e_electronic,
                p.e_electronic_noc, p.e_total, p.basis_size, p.hf_sweeps)
               for p in points])
    if failures:
        run.extra["failures"] = [
            {"d_lattice": f.d_lattice, "error": f.error} for f in failures]
    if not points:
        raise SolverConvergenceError("every curve point failed")
    return EXIT_OK


def cmd_critical_ratio(args, run: Run) -> int:
    if args.backend == "single":
        solver = single_particle_backend()
    else:
        n1, n2 = (int(p) for p in args.basis.split("+"))
        solver = two_electron_backend(n1=n1, n2=n2)
    d_values = parse_int_list(args.d) if args.d else None
    result = critical_ratio(args.d_atomic, args.n_small, args.n_large,
                            solver, d_lattice_values=d_values,
                            threshold=args.threshold)
    csv_path = run.record(run.path(".csv"))
    write_csv(csv_path, ["ratio", "e_small", "e_large", "deviation"],
              [(r.ratio, r.e_small, r.e_large, r.deviation)
               for r in result.departure_table])
    json_path = run.record(run.path(".json"))
    json_path.write_text(json.dumps({
        "d_atomic": result.d_atomic,
        "critical_ratio": result.critical_ratio,
        "fit_m": result.fit_m,
        "fit_n": result.fit_n,
        "converged": result.converged,
        "message": result.message,
    }, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_export_density(args, run: Run) -> int:
    lattice = LatticeSpec(args.n)
    params = hydrogen_params(args.ratio, args.n)
    spec = lowest_eigenpairs(lattice, params, args.level + 1, tol=args.tol)
    density = spec.orbitals[args.level].values ** 2
    bin_path = run.record(run.path(".field"))
    write_field_binary(bin_path, density, lattice)
    csv_path = run.record(run.path(".csv"))
    write_field_csv(csv_path, density, lattice)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latticechem",
        description="Lattice electronic-structure runs with manifests")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--config", default=None, help="key = value file")
    parser.add_argument("--jobs", type=int, default=1,
                        help="cap on concurrent solver jobs")
    parser.add_argument("--plot-script", action="store_true",
                        help="also emit a gnuplot text script")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("hydrogen-spectrum")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--ratios", required=True)
    p.add_argument("--levels", type=int, default=9)
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_hydrogen_spectrum)

    p = sub.add_parser("bohr-fit")
    p.add_argument("--n", required=True, help="comma list of lattice sides")
    p.add_argument("--ratios", required=True)
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_bohr_fit)

    for name in ("mediator-curve", "check-conditions"):
        p = sub.add_parser(name)
        for key in ("j", "jc", "u", "delta", "g", "jf"):
            p.add_argument(f"--{key}", type=float, default=None)
        p.add_argument("--nm", type=int, default=None)
        p.add_argument("--ne", type=int, default=None)
        if name == "mediator-curve":
            p.add_argument("--d", default="2:20")
            p.add_argument("--method", choices=["closed", "exact"],
                           default="closed")
            p.set_defaults(func=cmd_mediator_curve)
        else:
            p.add_argument("--lattice-n", type=int, required=True)
            p.add_argument("--tf", type=float, default=None)
            p.add_argument("--v0", type=float, default=None)
            p.add_argument("--threshold", type=float, default=10.0)
            p.set_defaults(func=cmd_check_conditions)

    for name in ("h2-curve", "pseudo-curve"):
        p = sub.add_parser(name)
        p.add_argument("--n", type=int, required=True)
        p.add_argument("--basis", default="8+8")
        p.add_argument("--d", default="2:24:2")
        p.add_argument("--schedule", default="linear:4.2:-0.065")
        p.add_argument("--potential", default="coulomb")
        p.add_argument("--f", type=float,
                       default=1.0 if name == "h2-curve" else 0.0)
        p.add_argument("--no-nuclear-repulsion", action="store_true")
        p.set_defaults(func=_curve_command)

    p = sub.add_parser("critical-ratio")
    p.add_argument("--d-atomic", type=float, required=True)
    p.add_argument("--n-small", type=int, required=True)
    p.add_argument("--n-large", type=int, required=True)
    p.add_argument("--backend", choices=["single", "two-electron"],
                   default="two-electron")
    p.add_argument("--basis", default="8+0")
    p.add_argument("--d", default=None)
    p.add_argument("--threshold", type=float, default=0.1)
    p.set_defaults(func=cmd_critical_ratio)

    p = sub.add_parser("export-density")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--level", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_export_density)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    config = {}
    try:
        if args.config:
            config = parse_config(args.config)
        out = args.out or os.environ.get("LATTICECHEM_OUT", ".")
        run = Run(Path(out), ["latticechem"] + argv, config)
        code = args.func(args, run)
        run.finish()
        return code
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverConvergenceError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
