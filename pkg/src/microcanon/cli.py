"""Command-line front end.

Every subcommand reads one :class:`~microcanon.config.RunConfig`, writes its
artifact into ``output.dir`` and returns an exit code: 0 success, 1 usage
error, 2 numeric-domain or range error, 3 verification FAIL.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .canonical import check_multiplicativity, partition_direct, partition_laplace
from .config import RunConfig, load_config
from .errors import IntegratorError, InvertibilityError, NumericDomainError, UsageError
from .flow import FlowConfig
from .microcanonical import CSV_COLUMNS, analytic_dos, estimate_dos, omega_shell
from .models import MODEL_PARAMS, MODELS, compose
from .report import CheckReport
from .sampling import STREAM_DIRECT, STREAM_SHELL, SampleConfig
from .thermo import free_energy_exact, free_energy_legendre, laplace_approx, thermo_limit_report
from . import verify as V

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_FAIL = 0, 1, 2, 3
VERIFY_KINDS = ("liouville", "coarea", "invariance", "preservation", "convolution", "multiplicativity")
SUBCOMMANDS = ("models", "dos", "omega", "zeta", "thermo", "verify")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, subcommand: str, cfg: RunConfig, columns: Sequence[str], rows: Iterable) -> Path:
    lines = [
        f"# microcanon {subcommand}",
        f"# config_sha256 = {cfg.sha256()}",
        f"# seed = {cfg['mc.seed']}",
        ",".join(columns),
    ]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_json(path: Path, cfg: RunConfig, payload: dict) -> Path:
    body = {"config_sha256": cfg.sha256(), "seed": cfg["mc.seed"], **payload}
    path.write_text(json.dumps(body, indent=2) + "\n")
    return path


def _sample_cfg(cfg: RunConfig) -> SampleConfig:
    return SampleConfig(count=cfg["mc.count"], seed=cfg["mc.seed"], workers=cfg["mc.workers"])


def _flow_cfg(cfg: RunConfig) -> FlowConfig:
    return FlowConfig(step=cfg["flow.step"], t_final=cfg["flow.t"], scheme=cfg["flow.scheme"])


def _out(cfg: RunConfig, name: str) -> Path:
    d = Path(cfg["output.dir"])
    d.mkdir(parents=True, exist_ok=True)
    return d / name


def cmd_models(cfg: RunConfig):
    rows = []
    for name in sorted(MODELS):
        spec = MODELS[name]()
        rows.append((name, " ".join(MODEL_PARAMS[name]) or "-", spec.n, spec.e_valid))
        print(f"{name:14s} params: {' '.join(MODEL_PARAMS[name]) or '-':16s} n={spec.n}")
    return write_csv(_out(cfg, "models.csv"), "models", cfg, ("name", "parameters", "n", "e_valid"), rows), True


def cmd_dos(cfg: RunConfig):
    model = cfg.model()
    table = estimate_dos(model, cfg.grid(model), _sample_cfg(cfg), kde=cfg["mc.kde"])
    return write_csv(_out(cfg, "dos.csv"), "dos", cfg, CSV_COLUMNS, table.csv_rows()), True


def cmd_omega(cfg: RunConfig):
    model = cfg.model()
    energies = cfg["omega.energies"]
    if energies is None:
        energies = [E for E in cfg.grid(model) if E > model.min_energy]
    scfg = _sample_cfg(cfg)
    rows = []
    for k, E in enumerate(energies):
        est = omega_shell(model, E, cfg["mc.delta"], scfg, stream=(STREAM_SHELL, k))
        ens = est.ensemble
        rows.append((E, est.value, est.se, ens.delta, ens.n_accepted, ens.n_proposed, est.critical, ens.truncated))
    cols = ("E", "omega_shell", "se", "delta", "accepted", "proposed", "critical_flag", "truncated")
    return write_csv(_out(cfg, "omega.csv"), "omega", cfg, cols, rows), True


def cmd_zeta(cfg: RunConfig):
    model = cfg.model()
    scfg = _sample_cfg(cfg)
    dos = estimate_dos(model, cfg.grid(model), scfg, kde=False, flag_critical=False)
    rows = []
    for k, beta in enumerate(cfg["beta.values"]):
        zl = partition_laplace(dos, beta)
        zd = partition_direct(model, beta, scfg, stream=(STREAM_DIRECT, k))
        exact = model.gibbs_prefactor * model.oracle.z(beta) if model.oracle.z is not None else math.nan
        rows.append((beta, zl.value, zd.value, zd.se, zl.tail_bound, zl.se, zl.quad_bound, exact))
    cols = ("beta", "Z_laplace", "Z_direct", "se", "tail_bound", "se_laplace", "quad_bound", "Z_exact")
    return write_csv(_out(cfg, "zeta.csv"), "zeta", cfg, cols, rows), True


def cmd_thermo(cfg: RunConfig):
    model = cfg.model()
    source = cfg["thermo.source"]
    has_oracle = model.oracle.omega is not None
    if source == "analytic" and not has_oracle:
        raise UsageError(f"model {model.name!r} has no analytic Omega; use thermo.source = monte_carlo")
    analytic = source == "analytic" or (source == "auto" and has_oracle)
    grid = cfg.grid(model)
    dos = analytic_dos(model, grid) if analytic else estimate_dos(model, grid, _sample_cfg(cfg))
    kB = model.kB
    rows = []
    for T in cfg["thermo.T"]:
        beta = 1.0 / (kB * T)
        fe = free_energy_exact(dos, T, kB)
        try:
            fl = free_energy_legendre(dos, T, kB).value
        except InvertibilityError:
            fl = math.nan
        if analytic and model.oracle.z is not None:
            Z = model.gibbs_prefactor * model.oracle.z(beta)
        else:
            Z = partition_laplace(dos, beta).value
        i1 = laplace_approx(dos, beta, 1).value
        rows.append((T, fe.value, fl, -kB * T * math.log(Z), i1 / Z, fe.energy, fe.at_boundary))
    cols = ("T", "F_exact", "F_legendre", "minus_kT_lnZ", "I1_ratio", "E_star", "at_boundary")
    path = write_csv(_out(cfg, "thermo.csv"), "thermo", cfg, cols, rows)
    ok = True
    if cfg["thermo.n_list"]:
        reports = [thermo_limit_report(cfg["thermo.n_list"], T, kB) for T in cfg["thermo.T"]]
        ok = all(r.passed for r in reports)
        write_json(_out(cfg, "thermo_limit.json"), cfg, {"check": "thermo_limit",
                                                         "reports": [r.to_dict() for r in reports],
                                                         "pass": ok})
    return path, ok


def _merge(reports: Sequence[CheckReport], key: str, values: Sequence) -> CheckReport:
    first = reports[0]
    merged = CheckReport(first.check, first.model, {**first.params, key: list(values)}, first.seed)
    for r, v in zip(reports, values):
        for e in r.estimates:
            merged.estimates.append({**e, key: v})
    merged.passed = all(r.passed for r in reports)
    return merged


def _verify(cfg: RunConfig, kind: str) -> CheckReport:
    model = cfg.model()
    scfg = _sample_cfg(cfg)
    flow = _flow_cfg(cfg)
    n = model.n
    E = cfg["verify.E"]
    if kind == "liouville":
        pts = V.sample_region(model, cfg["verify.points"], cfg["mc.seed"], E)
        return V.check_liouville(model, pts, flow, seed=cfg["mc.seed"])
    if kind == "coarea":
        f = V.parse_observable(cfg["verify.f"], n)
        a, b = cfg["verify.E_range"]
        expected = cfg["verify.expected"]
        if expected is None and f.name == "1" and model.oracle.g is not None:
            expected = float(model.oracle.g(b) - model.oracle.g(a))
        return V.check_coarea(model, f, (a, b), scfg, expected=expected)
    events = None
    if cfg["verify.events"] is not None:
        events = [V.parse_event(s, n) for s in cfg["verify.events"]]
    E = 1.0 if E is None else E
    common = dict(cfg=scfg, flow=flow, target=cfg["verify.target"], delta=cfg["mc.delta"],
                  drift_tol=cfg["verify.drift_tol"])
    if kind == "invariance":
        obs = None
        if cfg["verify.observables"] is not None:
            obs = [V.parse_observable(s, n) for s in cfg["verify.observables"]]
        return V.check_invariance(model, E, cfg["flow.t"], obs, events, **common)
    if kind == "preservation":
        return V.check_flow_preservation(model, E, cfg["flow.t"], events, **common)
    other = cfg.model("model2")
    if kind == "convolution":
        return V.check_convolutivity(model, other, cfg.grid(compose(model, other)), scfg)
    if kind == "multiplicativity":
        betas = cfg["beta.values"]
        return _merge([check_multiplicativity(model, other, b, scfg) for b in betas], "beta", betas)
    raise UsageError(f"unknown verify check {kind!r}; choose from {', '.join(VERIFY_KINDS)}")


def cmd_verify(cfg: RunConfig, kind: str):
    report = _verify(cfg, kind)
    print(report.summary())
    path = _out(cfg, f"verify_{kind}.json")
    path.write_text(report.to_json(config_sha256=cfg.sha256()) + "\n")
    return path, report.passed


def run(subcommand: str, config: RunConfig, kind: Optional[str] = None) -> int:
    """Execute one subcommand; exceptions map onto exit codes in :func:`main`."""
    if subcommand == "verify":
        if kind not in VERIFY_KINDS:
            raise UsageError(f"verify needs one of {', '.join(VERIFY_KINDS)}, got {kind!r}")
        path, ok = cmd_verify(config, kind)
    else:
        handlers = {"models": cmd_models, "dos": cmd_dos, "omega": cmd_omega,
                    "zeta": cmd_zeta, "thermo": cmd_thermo}
        if subcommand not in handlers:
            raise UsageError(f"unknown subcommand {subcommand!r}; choose from {', '.join(SUBCOMMANDS)}")
        path, ok = handlers[subcommand](config)
    print(f"wrote {path}")
    return EXIT_OK if ok else EXIT_FAIL


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="flat 'key = value' config file")
    common.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("-o", "--output", help="output directory (same as output.dir)")
    parser = _Parser(prog="microcanon", description="Microcanonical and canonical ensemble toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    sub.add_parser("models", parents=[common], help="list built-in Hamiltonians")
    sub.add_parser("dos", parents=[common], help="g(E) and Omega(E) table")
    sub.add_parser("omega", parents=[common], help="shell estimate of Omega(E)")
    sub.add_parser("zeta", parents=[common], help="partition function by two routes")
    sub.add_parser("thermo", parents=[common], help="free energies and Laplace approximation")
    pv = sub.add_parser("verify", parents=[common], help="statistical checks")
    pv.add_argument("kind", choices=VERIFY_KINDS)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    warnings.formatwarning = lambda msg, cat, *a, **k: f"warning: {cat.__name__}: {msg}\n"
    try:
        args = build_parser().parse_args(argv)
        overrides = list(args.set)
        if args.output is not None:
            overrides.append(f"output.dir = {args.output}")
        cfg = load_config(args.config, overrides)
        return run(args.subcommand, cfg, getattr(args, "kind", None))
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericDomainError, IntegratorError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
