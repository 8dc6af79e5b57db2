"""
Isoprofile command-line workbench.

This script:
1. Parses a subcommand and action (e.g. `graph validate`, `rev cap`, `verify`)
2. Runs the matching service operation with the configured seed and tolerances
3. Writes JSON reports (with .meta.json sidecars) and CSV plot data to --out
4. Exits 0 when every check passed, 1 when a check failed, 2 on errors
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Iterable, Optional

API_DIR = Path(__file__).resolve().parent.parent / "api"
if str(API_DIR) not in sys.path:
    sys.path.insert(0, str(API_DIR))

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from models.reports import VerificationReport
from services.calibration_engine import parse_total, pipe_clearing_coverage
from services.conformal_forge import (
    asymptotic_diagnostics,
    conformal_report,
    conformal_solve,
    vanishing_profile_construction,
)
from services.cusp_assembly import assemble_surface, sublevel_samples, surface_dump, surface_report
from services.errors import BadParameters, GraphFormatError, IsoprofileError
from services.level_graph import (
    assign_weights,
    check_weight_bounds,
    renormalize_levels,
    validate_graph,
    verify_level_sums,
)
from services.oracle_bench import competitor_search, search_report, singular_flux
from services.property_suite import property_suite
from services.reporting import dumps, write_csv, write_report
from services.revolution_lab import (
    build_cap,
    merge_profiles,
    metric_from_profile,
    profile_from_description,
    profile_preset,
    profile_regimes,
    stability_and_spectrum,
    surface_preset,
)
from services.settings import get_settings

logger = logging.getLogger("isoprofile")

ACTIONS = {
    "graph": ("validate", "weights", "renormalize"),
    "surface": ("assemble", "areas", "coverage"),
    "rev": ("profile", "metric", "cap", "stability", "merge"),
    "conformal": ("solve", "diagnostics", "vanishing"),
    "oracle": ("search", "flux"),
}


class RunConfig(BaseModel):
    """One CLI invocation."""
    command: str
    action: Optional[str] = None
    input: Optional[Path] = None
    output_dir: Path
    tol: Optional[float] = Field(None, gt=0, description="ODE relative tolerance")
    seed: int
    trials: int = Field(20, ge=1)
    modes: int = Field(8, ge=1)


def read_json(path: Optional[Path]) -> dict:
    """Load an input file; parse errors carry line and column."""
    if path is None:
        raise BadParameters("This action needs --in")
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise GraphFormatError(f"No such file: {path}", location=str(path)) from e
    except json.JSONDecodeError as e:
        raise GraphFormatError(f"{path}: {e.msg}", location=f"line {e.lineno} column {e.colno}") from e


class Run:
    """Collects reports and artifacts for one invocation."""

    def __init__(self, config: RunConfig, args: argparse.Namespace):
        self.config = config
        self.args = args
        self.reports: list[VerificationReport] = []

    @property
    def name(self) -> str:
        return f"{self.config.command}_{self.config.action}" if self.config.action else self.config.command

    def emit(self, result: Any, reports: Iterable[VerificationReport] = (), csv: Optional[dict] = None) -> None:
        for r in reports:
            if r.seed is None:
                r.seed = self.config.seed
            self.reports.append(r)
        payload = {
            "command": self.config.command,
            "action": self.config.action,
            "seed": self.config.seed,
            "passed": all(r.passed for r in self.reports),
            "result": result,
        }
        write_report(payload, self.config.output_dir, self.name)
        if csv:
            write_csv(csv, self.config.output_dir, self.name)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)


def run_graph(run: Run) -> None:
    g = validate_graph(read_json(run.config.input), nu=run.args.nu)
    w = assign_weights(g)
    u = renormalize_levels(g)
    action = run.config.action
    if action == "validate":
        sums, bounds = verify_level_sums(g, w), check_weight_bounds(g, w, u)
        run.emit({"graph": g.summary(), "level_sums": sums, "weight_bounds": bounds}, [sums, bounds])
    elif action == "weights":
        sums = verify_level_sums(g, w)
        run.emit({"weights": w, "level_sums": sums}, [sums])
    else:
        run.emit({"levels": u})


def run_surface(run: Run) -> None:
    s = assemble_surface(validate_graph(read_json(run.config.input)))
    action = run.config.action
    if action == "assemble":
        report = surface_report(s, rng=np.random.default_rng(run.config.seed))
        run.emit({"surface": surface_dump(s), "report": report}, [report])
    elif action == "areas":
        samples = sublevel_samples(s, run.args.t or [0.5, 1.0, 2.0])
        run.emit(samples, csv={"t": samples["t"], "area": [float(a) for a in samples["area"]]})
    else:
        report = pipe_clearing_coverage(s, total=parse_total(run.args.total))
        run.emit(report, [report])


def _profile(run: Run):
    if run.config.input is not None:
        return profile_from_description(read_json(run.config.input), name=run.config.input.stem)
    return profile_preset(run.args.preset)


def run_rev(run: Run) -> None:
    args, action = run.args, run.config.action
    if action == "profile":
        prof = _profile(run)
        run.emit({"profile": prof}, csv=prof.samples(args.points))
    elif action == "metric":
        prof = _profile(run)
        surface = metric_from_profile(prof, rtol=run.config.tol)
        err = surface.roundtrip
        report = VerificationReport(title="roundtrip")
        report.add("roundtrip", err < 1e-6, measured=err, tolerance=1e-6)
        run.emit({"surface": surface, "report": report}, [report], csv={"r": surface.r, "f": surface.f, "V": surface.area})
    elif action == "cap":
        cap = build_cap(args.delta, args.k[0], args.alpha)
        run.emit(cap, [cap.report], csv=cap.profile.samples(args.points))
    elif action == "stability":
        surface = surface_preset(args.surface)
        rows = [stability_and_spectrum(surface, r) for r in args.radii]
        run.emit({"surface": args.surface, "rows": rows})
    else:
        caps = [build_cap(args.delta, k, args.alpha).profile for k in args.k]
        m = len(caps)
        manifold = profile_preset("linear", v_max=2 * args.alpha * m)
        merged = merge_profiles(caps, manifold, m, args.delta, args.alpha)
        regimes = profile_regimes(merged, m, args.alpha)
        run.emit({"merged": merged, "regimes": regimes}, [regimes], csv=merged.profile.samples(args.points))


def _targets(text: Optional[list[str]]) -> list[tuple[float, float]]:
    if not text:
        return [(float(v), float(e)) for v in np.geomspace(1, 100, 5) for e in np.geomspace(1e-4, 1e-1, 5)]
    pairs = []
    for item in text:
        try:
            v, e = item.split(":")
            pairs.append((float(v), float(e)))
        except ValueError as err:
            raise BadParameters(f"Targets are v:eps pairs, got {item!r}", target=item) from err
    return pairs


def run_conformal(run: Run) -> None:
    args, action = run.args, run.config.action
    if action == "vanishing":
        construction = vanishing_profile_construction(_targets(args.targets))
        run.emit(construction, [construction.report])
        return
    sol = conformal_solve(
        profile_preset(args.preset), n=args.n, t0=args.t0,
        require_blowup=action == "diagnostics", rtol=run.config.tol,
    )
    reports = [conformal_report(sol)]
    if action == "diagnostics":
        reports.append(asymptotic_diagnostics(sol))
    run.emit({"solution": sol, "reports": reports}, reports, csv=sol.samples())


def run_oracle(run: Run) -> None:
    args, config = run.args, run.config
    if config.action == "flux":
        result = singular_flux(args.r)
        report = VerificationReport(title="flux")
        report.add("flux_identity", result.positive and result.error < 1e-6, measured=result.flux, expected=result.closed_form)
        run.emit(result, [report])
        return
    result = competitor_search(
        surface_preset(args.surface), args.v, modes=config.modes, trials=config.trials, seed=config.seed
    )
    report = search_report(result)
    run.emit({"result": result, "report": report}, [report], csv=result.best_curve.samples())


def run_verify(run: Run) -> None:
    report = property_suite(run.args.targets or None, seed=run.config.seed, full=run.args.full, corrupt=run.args.corrupt)
    run.emit(report, [report])


HANDLERS = {
    "graph": run_graph,
    "surface": run_surface,
    "rev": run_rev,
    "conformal": run_conformal,
    "oracle": run_oracle,
    "verify": run_verify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--in", dest="input", type=Path, help="Input graph or profile file")
    common.add_argument("--out", type=Path, help="Output directory (default ISOPROFILE_OUTPUT_DIR)")
    common.add_argument("--seed", type=int, help="Seed (default ISOPROFILE_SEED)")
    common.add_argument("--tol", type=float, help="ODE relative tolerance")
    common.add_argument("--trials", type=int, default=20)
    common.add_argument("--modes", type=int, default=8)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="isoprofile", description="Isoperimetric profile workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("graph", parents=[common])
    p.add_argument("action", choices=ACTIONS["graph"])
    p.add_argument("--nu", type=int)

    p = sub.add_parser("surface", parents=[common])
    p.add_argument("action", choices=ACTIONS["surface"])
    p.add_argument("--t", type=float, nargs="+")
    p.add_argument("--total", help="Upper end of the coverage range, e.g. 1024 or 3/2")

    p = sub.add_parser("rev", parents=[common])
    p.add_argument("action", choices=ACTIONS["rev"])
    p.add_argument("--preset", default="hyperbolic")
    p.add_argument("--delta", type=float, default=1.5)
    p.add_argument("--k", type=float, nargs="+", default=[100.0])
    p.add_argument("--alpha", type=float, default=10.0)
    p.add_argument("--surface", default="hyperbolic")
    p.add_argument("--radii", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    p.add_argument("--points", type=int, default=401)

    p = sub.add_parser("conformal", parents=[common])
    p.add_argument("action", choices=ACTIONS["conformal"])
    p.add_argument("--preset", default="vlogv")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--t0", type=float, default=1.0)
    p.add_argument("--targets", nargs="+", help="v:eps pairs")

    p = sub.add_parser("oracle", parents=[common])
    p.add_argument("action", choices=ACTIONS["oracle"])
    p.add_argument("--surface", default="euclidean")
    p.add_argument("--v", type=float, default=3.141592653589793)
    p.add_argument("--r", type=float, default=0.5)

    p = sub.add_parser("verify", parents=[common])
    p.add_argument("--targets", nargs="+")
    p.add_argument("--full", action="store_true", help="Acceptance sizes")
    p.add_argument("--corrupt", action="store_true", help="Corrupt one weight to exercise the failure path")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    """Main entry point."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, force=True)

    try:
        settings = get_settings()
        config = RunConfig(
            command=args.command,
            action=getattr(args, "action", None),
            input=args.input,
            output_dir=args.out or settings.output_dir,
            tol=args.tol,
            seed=settings.seed if args.seed is None else args.seed,
            trials=args.trials,
            modes=args.modes,
        )
    except ValidationError as e:
        logger.error(f"Configuration error: {e}")
        print(json.dumps({"error": "ConfigurationError", "message": str(e)}), file=sys.stderr)
        return 2

    run = Run(config, args)
    logger.info(f"Running {run.name} with seed {config.seed}")
    try:
        HANDLERS[config.command](run)
    except IsoprofileError as e:
        logger.error(f"{run.name} failed: {e.message}")
        print(dumps(e.to_dict()), file=sys.stderr, end="")
        return 2

    status = 0 if run.passed else 1
    logger.info(f"{run.name}: {len(run.reports)} reports, {'all passed' if status == 0 else 'failures'}")
    return status


if __name__ == "__main__":
    sys.exit(main())
