"""Command-line front end.

Exit codes: 0 all checks passed, 1 validation or operator failure, 2 the
computation ran but a scientific check failed or a sweep stopped early.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import scipy.fft

from . import __version__
from .config import ConfigError, RunConfig, ensure_directory, load_config
from .energy import solve_magnetostatics, stray_energy
from .fieldio import FieldFileError, read_field, write_field
from .gamma import (
    RECOVERY_HEADER,
    RecoveryInput,
    compactness_diagnostics,
    eps_sweep,
    recovery_study,
    slab_pair,
    write_json,
    write_records_csv,
    write_sweep_csv,
)
from .minimize import minimize_feps, minimize_limit2d, write_audit_csv
from .spectral import VectorField, constraint_residual, defect_norm, project_afree, stack
from .symbols import BUILTIN_OPERATORS, OperatorError, check_constant_rank, get_operator, load_operator, make_maxwell

log = logging.getLogger("crmag")

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2
PROJECTION_TOL = 1e-10


class UsageError(Exception):
    pass


def _operator(name_or_path: str):
    if name_or_path in BUILTIN_OPERATORS:
        return get_operator(name_or_path)
    path = Path(name_or_path)
    if not path.exists():
        raise UsageError(f"unknown operator {name_or_path!r}: not one of {', '.join(BUILTIN_OPERATORS)} and no such file")
    try:
        return load_operator(path)
    except OSError as exc:
        raise UsageError(f"cannot read operator file {path}: {exc.strerror}") from None


def _field(path: str) -> VectorField:
    try:
        return read_field(path)
    except OSError as exc:
        raise UsageError(f"cannot read field file {path}: {exc.strerror}") from None


def _config(args) -> RunConfig:
    if not args.config:
        raise UsageError("this command needs --config")
    return load_config(args.config).with_overrides(out=args.out, seed=args.seed)


def _out_dir(args, cfg: RunConfig | None = None) -> Path:
    if args.out:
        return Path(args.out)
    if cfg is not None:
        return Path(cfg.output_directory)
    return Path("out")


def _fmt(x: float) -> str:
    return f"{x:.6e}"


# -- commands ----------------------------------------------------------------------


def cmd_check_rank(args) -> int:
    op = _operator(args.operator)
    rep = check_constant_rank(op, args.samples, args.seed)
    print(f"{op.name}: rank {rep.rank}, constant: {'yes' if rep.constant else 'no'}")
    print("axis ranks: " + " ".join(str(r) for r in rep.axis_ranks))
    if not rep.constant:
        print(f"{len(rep.offending)} offending frequencies:")
        for xi, r in zip(rep.offending[: args.show], rep.offending_ranks[: args.show]):
            print("  (" + ", ".join(f"{v:+.6f}" for v in xi) + f")  rank {r}")
    return EXIT_OK if rep.constant else EXIT_INVALID


def cmd_project(args) -> int:
    op = _operator(args.operator)
    f = _field(args.field)
    if f.channels != op.n:
        raise UsageError(f"field has {f.channels} channels but operator {op.name} acts on {op.n}")
    if f.grid.d != op.d:
        raise UsageError(f"field is {f.grid.d}D but operator {op.name} has d = {op.d}")
    eps = f.grid.eps if args.eps is None else args.eps
    if not eps > 0:
        raise UsageError("eps must be positive")
    u = VectorField(f.grid.with_eps(eps), f.samples)
    out = ensure_directory(_out_dir(args))
    pu = project_afree(u, op)
    before, after = defect_norm(u, op), defect_norm(pu, op)
    print(f"defect before: {_fmt(before)}")
    print(f"defect after:  {_fmt(after)}")
    write_field(pu, out / "projected.crml")
    write_json({"operator": op.name, "eps": eps, "defect_before": before, "defect_after": after}, out / "project.json")
    return EXIT_OK if after < PROJECTION_TOL else EXIT_FAILED


def cmd_demag(args) -> int:
    m = _field(args.field)
    if m.channels != 3 or m.grid.d != 3:
        raise UsageError("demag needs a 3-channel field on a 3D grid")
    eps = m.grid.eps if args.eps is None else args.eps
    if not eps > 0:
        raise UsageError("eps must be positive")
    out = ensure_directory(_out_dir(args))
    m = VectorField(m.grid.with_eps(eps), m.samples)
    h = solve_magnetostatics(m)
    res = constraint_residual(stack(m, h), make_maxwell())
    stray = stray_energy(h)
    print(f"stray energy: {_fmt(stray)}")
    print(f"maxwell residual: {_fmt(res)}")
    write_field(h, out / "h.crml")
    write_json({"eps": eps, "stray": stray, "maxwell_residual": res}, out / "demag.json")
    return EXIT_OK if res < PROJECTION_TOL else EXIT_FAILED


def cmd_minimize(args) -> int:
    cfg = _config(args)
    geometry = cfg.geometry()
    out = ensure_directory(_out_dir(args, cfg))
    if cfg.eps == 0:
        res = minimize_limit2d(geometry, cfg.params, cfg.minimize)
    else:
        res = minimize_feps(geometry, cfg.params, cfg.eps, cfg.minimize)
    rep = res.report.to_dict()
    record = {k: rep[k] for k in ("eps", "exchange", "anisotropy", "stray", "total")}
    print(f"status: {res.status} after {res.iterations} iterations, residual {_fmt(res.residual)}")
    print(f"energy: {_fmt(res.report.total)}")
    if "json" in cfg.formats:
        write_json({**record, "status": res.status, "iterations": res.iterations, "residual": res.residual}, out / "energy.json")
    if "csv" in cfg.formats:
        write_audit_csv(res.history, out / "audit.csv")
    if "crml" in cfg.formats:
        write_field(res.m_final, out / "m.crml")
        write_field(res.h_final, out / "h.crml")
    return EXIT_OK if res.converged else EXIT_FAILED


def cmd_sweep(args) -> int:
    cfg = _config(args)
    geometry = cfg.geometry()
    out = ensure_directory(_out_dir(args, cfg))
    result = eps_sweep(geometry, cfg.params, cfg.schedule, cfg.minimize)
    summary = dict(result.summary)
    if len(result.results) >= 2:
        summary["compactness"] = compactness_diagnostics(result.results, geometry).to_dict()
    for r in result.records:
        print(f"eps={r.eps:<8g} energy={_fmt(r.energy_eps)} limit={_fmt(r.energy_limit)} d3m={_fmt(r.d3m_norm)} h_gap={_fmt(r.h_gap)}")
    for a in summary.get("assertions", []):
        print(f"{a['name']}: {'pass' if a['passed'] else 'FAIL'}")
    if result.failure:
        print(f"sweep stopped at eps={result.failure['eps']}: {result.failure['message']}")
    if "csv" in cfg.formats:
        write_sweep_csv(result.records, out / "sweep.csv")
    if "json" in cfg.formats:
        write_json(summary, out / "summary.json")
    if "crml" in cfg.formats:
        for i, r in enumerate(result.results):
            write_field(r.m_final, out / f"m_{i}.crml")
    return EXIT_OK if summary["passed"] else EXIT_FAILED


def cmd_recover(args) -> int:
    cfg = _config(args)
    geometry = cfg.geometry()
    if (args.m0 is None) != (args.h0 is None):
        raise UsageError("--m0 and --h0 go together")
    try:
        if args.m0 is None:
            inp = slab_pair(geometry, cfg.params.m_s)
        else:
            m0, h0 = _field(args.m0), _field(args.h0)
            if m0.grid.counts != geometry.grid.counts or h0.grid.counts != geometry.grid.counts:
                raise UsageError("m0/h0 grids do not match grid.counts")
            inp = RecoveryInput(VectorField(geometry.grid, m0.samples), VectorField(geometry.grid, h0.samples), geometry, cfg.params.m_s)
    except ValueError as exc:
        raise UsageError(f"invalid recovery input: {exc}") from None
    out = ensure_directory(_out_dir(args, cfg))
    records, summary = recovery_study(inp, cfg.params, cfg.schedule)
    for r in records:
        print(f"eps={r.eps:<8g} div={_fmt(r.div_residual)} curl={_fmt(r.curl_residual)} gap={_fmt(r.energy_gap)}")
    if "csv" in cfg.formats:
        write_records_csv(records, RECOVERY_HEADER, out / "recovery.csv")
    if "json" in cfg.formats:
        write_json(summary, out / "summary.json")
    return EXIT_OK if summary["passed"] else EXIT_FAILED


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides io.output_directory)")
    common.add_argument("--threads", type=int, default=1, metavar="N", help="FFT worker cap (default 1)")
    common.add_argument("--seed", type=int, metavar="N", help="random seed (overrides minimize.seed)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="crmag", description="Constant-rank spectral tools and thin-film micromagnetics.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("check-rank", parents=[common], help="test an operator for constant rank")
    s.add_argument("operator", help="builtin name (div, curl, maxwell) or operator file")
    s.add_argument("--samples", type=int, default=10_000)
    s.add_argument("--show", type=int, default=20, help="offending frequencies to list")
    s.set_defaults(func=cmd_check_rank)

    s = sub.add_parser("project", parents=[common], help="project a field onto A-free fields")
    s.add_argument("field", help="CRML field file")
    s.add_argument("--operator", default="maxwell")
    s.add_argument("--eps", type=float, help="thickness (default: from the file header)")
    s.set_defaults(func=cmd_project)

    s = sub.add_parser("demag", parents=[common], help="solve for the induced field of a magnetization")
    s.add_argument("field", help="CRML magnetization file")
    s.add_argument("--eps", type=float, help="thickness (default: from the file header)")
    s.set_defaults(func=cmd_demag)

    s = sub.add_parser("minimize", parents=[common], help="minimize the energy at minimize.eps")
    s.set_defaults(func=cmd_minimize)

    s = sub.add_parser("sweep", parents=[common], help="minimize along sweep.eps and compare with the limit")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("recover", parents=[common], help="build the recovery sequence along sweep.eps")
    s.add_argument("--m0", metavar="FILE", help="limit magnetization (default: out-of-plane slab)")
    s.add_argument("--h0", metavar="FILE", help="limit induced field")
    s.set_defaults(func=cmd_recover)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        with scipy.fft.set_workers(args.threads):
            return args.func(args)
    except (UsageError, ConfigError, FieldFileError, OperatorError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
