"""Command-line front end.

Subcommands cover the full pipeline: ``prep`` recodes the raw trial
CSV, ``km``/``aj`` run the nonparametric estimators, ``fit`` estimates
a flexible parametric cause-specific model and saves it as JSON,
``standsurv`` standardizes saved models over a population file, and
``recipe`` reruns a named canned analysis. Every run writes a JSON
manifest next to its output. Exit codes: 0 success, 2 validation or
usage error, 1 runtime error.
"""
import argparse
import dataclasses
import json
import pathlib
import sys

import numpy as np

from . import __version__
from .analysis import RECIPES, run_recipe
from .dataset import SurvivalFrame, load_csv, prepare_prostate, declare_survival
from .fpm import ModelSpec, fit, load_fit, save_fit
from .nonparam import aalen_johansen_cif, kaplan_meier_failure, steps_to_frame
from .standardize import (
    AtScenario,
    StandardizeRequest,
    standardized_cif,
    standardized_failure,
    standardized_rmft,
)


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Validated invocation: subcommand plus its flag values."""

    subcommand: str
    input: str = None
    out: str = None
    failure_code: tuple = None
    exit_time: float = None
    group: str = None
    covariates: tuple = None
    df: int = None
    tvc: tuple = ()
    models: tuple = None
    estimand: str = None
    at: tuple = ()
    contrast: str = None
    lincom: tuple = None
    time_grid: tuple = None
    t_star: float = None
    ci_level: float = 0.95
    nodes: int = 50
    row_index: int = None
    seed: int = 0
    recipe: str = None
    out_dir: str = "."


def _parse_codes(text):
    try:
        return tuple(int(c) for c in text.split(","))
    except ValueError:
        raise ValueError(f"--failure-code expects integers, got '{text}'")


def _parse_tvc(items):
    out = []
    for item in items or ():
        col, sep, df = item.partition(":")
        if not sep or not df.isdigit():
            raise ValueError(f"--tvc expects col:df, got '{item}'")
        out.append((col, int(df)))
    return tuple(out)


def _parse_at(items):
    # "rx=1,agercs1rx=~agercs1" -> one scenario; repeat --at for more
    scenarios = []
    for i, item in enumerate(items or ()):
        assignments = []
        for piece in item.split(","):
            col, sep, value = piece.partition("=")
            col = col.strip()
            value = value.strip()
            if not sep or not col or not value:
                raise ValueError(f"--at expects col=value pairs, got '{piece}'")
            if value.startswith("~"):
                assignments.append((col, value[1:]))
            else:
                try:
                    assignments.append((col, float(value)))
                except ValueError:
                    raise ValueError(f"--at value for '{col}' must be a number or ~column")
        scenarios.append(AtScenario(f"at{i + 1}", tuple(assignments)))
    return tuple(scenarios)


def _parse_timevar(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"--timevar expects start:stop:points, got '{text}'")
    start, stop = float(parts[0]), float(parts[1])
    points = int(parts[2])
    if points < 2:
        raise ValueError("--timevar needs at least 2 points")
    return tuple(np.linspace(start, stop, points))


def _parse_lincom(items):
    if not items:
        return None
    return tuple(tuple(float(w) for w in item.replace(",", " ").split()) for item in items)


def _write_manifest(out_path, payload):
    path = pathlib.Path(out_path)
    manifest = path.with_suffix(".manifest.json") if path.suffix else path / "manifest.json"
    payload = dict(payload)
    payload.setdefault("versions", {"crstd": __version__})
    manifest.write_text(json.dumps(payload, indent=1, sort_keys=True, default=float))
    return str(manifest)


def _echo_config(config):
    raw = dataclasses.asdict(config)
    return {k: v for k, v in raw.items() if v not in (None, (), "")}


def _load_frame(config):
    if config.input is None:
        raise ValueError("--input is required")
    return load_csv(config.input)


def _cmd_prep(config):
    frame = prepare_prostate(_load_frame(config))
    frame.to_csv(config.out)
    _write_manifest(config.out, {"command": _echo_config(config), "n_rows": frame.n_rows})
    print(f"wrote {config.out} ({frame.n_rows} rows)")


def _cmd_km(config):
    frame = _load_frame(config)
    decl = declare_survival(frame, config.failure_code, config.exit_time)
    table = steps_to_frame(kaplan_meier_failure(frame, decl, group=config.group))
    table.to_csv(config.out, index=False)
    _write_manifest(config.out, {"command": _echo_config(config), "n_rows": frame.n_rows})
    print(f"wrote {config.out} ({len(table)} rows)")


def _cmd_aj(config):
    frame = _load_frame(config)
    table = steps_to_frame(aalen_johansen_cif(frame, config.exit_time, group=config.group))
    table.to_csv(config.out, index=False)
    _write_manifest(config.out, {"command": _echo_config(config), "n_rows": frame.n_rows})
    print(f"wrote {config.out} ({len(table)} rows)")


def _cmd_fit(config):
    frame = _load_frame(config)
    if config.covariates is None or config.df is None:
        raise ValueError("fit requires --covariates and --df")
    codes = config.failure_code
    spec = ModelSpec(
        config.covariates,
        config.df,
        config.tvc,
        declare_survival(frame, codes[0] if len(codes) == 1 else codes, config.exit_time),
    )
    result = fit(spec, frame)
    save_fit(result, config.out)
    _write_manifest(
        config.out,
        {
            "command": _echo_config(config),
            "loglik": result.loglik,
            "converged": result.converged,
            "n": result.n,
            "n_events": result.n_events,
        },
    )
    print(result.summary().to_string())
    print(f"log-likelihood {result.loglik:.4f}  ({result.n} rows, {result.n_events} events)")
    print(f"wrote {config.out}")


def _cmd_standsurv(config):
    if not config.models:
        raise ValueError("--models is required")
    fits = tuple(load_fit(path) for path in config.models)
    frame = _load_frame(config)
    if config.estimand is None:
        raise ValueError("--estimand is required")
    if not config.at:
        raise ValueError("at least one --at scenario is required")
    request = StandardizeRequest(
        models=fits,
        data=frame.data,
        estimand=config.estimand,
        scenarios=config.at,
        time_grid=config.time_grid,
        t_star=config.t_star,
        contrast=config.contrast,
        lincom=config.lincom,
        ci_level=config.ci_level,
        nodes=config.nodes,
        row_index=config.row_index,
    )
    if config.estimand in ("failure", "survival"):
        series = standardized_failure(request)
    elif config.estimand == "cif":
        series = standardized_cif(request)
    else:
        series = standardized_rmft(request)
    series.to_csv(config.out)
    _write_manifest(config.out, {"command": _echo_config(config), "run": series.metadata})
    print(f"wrote {config.out} ({len(series.frame)} rows)")


def _cmd_recipe(config):
    frame = _load_frame(config)
    result = run_recipe(
        config.recipe,
        frame,
        out_dir=config.out_dir,
        time_grid=config.time_grid,
        t_star=config.t_star if config.t_star is not None else 60.0,
        nodes=config.nodes,
        ci_level=config.ci_level,
    )
    for path in result["paths"]:
        print(f"wrote {path}")


_HANDLERS = {
    "prep": _cmd_prep,
    "km": _cmd_km,
    "aj": _cmd_aj,
    "fit": _cmd_fit,
    "standsurv": _cmd_standsurv,
    "recipe": _cmd_recipe,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="crstd",
        description="Cause-specific flexible parametric survival models "
        "and standardized estimands under competing events.",
    )
    parser.add_argument("--version", action="version", version=f"crstd {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, out=True):
        p.add_argument("--input", required=True, help="input CSV path")
        if out:
            p.add_argument("--out", required=True, help="output file path")
        p.add_argument("--seed", type=int, default=0, help="seed recorded in the manifest")

    p = sub.add_parser("prep", help="recode the raw trial CSV into the analysis cohort")
    common(p)

    p = sub.add_parser("km", help="Kaplan-Meier failure curves")
    common(p)
    p.add_argument("--failure-code", required=True, help="event code(s), comma separated")
    p.add_argument("--exit-time", type=float, required=True)
    p.add_argument("--group", default=None, help="grouping column")

    p = sub.add_parser("aj", help="Aalen-Johansen cause-specific cumulative incidence")
    common(p)
    p.add_argument("--exit-time", type=float, required=True)
    p.add_argument("--group", default=None, help="grouping column")

    p = sub.add_parser("fit", help="fit a cause-specific flexible parametric model")
    common(p)
    p.add_argument("--failure-code", required=True, help="event code(s), comma separated")
    p.add_argument("--exit-time", type=float, required=True)
    p.add_argument("--covariates", required=True, help="comma-separated covariate columns")
    p.add_argument("--df", type=int, required=True, help="baseline spline df")
    p.add_argument("--tvc", action="append", default=[], metavar="COL:DF",
                   help="time-varying effect, repeatable")

    p = sub.add_parser("standsurv", help="standardize saved models over a population")
    common(p)
    p.add_argument("--models", required=True, help="model JSON path(s), comma separated")
    p.add_argument("--estimand", choices=("survival", "failure", "cif", "rmft"), required=True)
    p.add_argument("--at", action="append", default=[], metavar="COL=V,...",
                   help="scenario assignments; ~col copies a column; repeatable")
    p.add_argument("--contrast", choices=("difference", "ratio"), default=None)
    p.add_argument("--lincom", action="append", default=[], metavar="W1,W2,...",
                   help="scenario-by-cause weights, repeatable")
    p.add_argument("--timevar", default=None, metavar="START:STOP:POINTS")
    p.add_argument("--t-star", type=float, default=None)
    p.add_argument("--ci-level", type=float, default=0.95)
    p.add_argument("--nodes", type=int, default=50)
    p.add_argument("--row-index", type=int, default=None,
                   help="standardize over this single row instead of the full data")

    p = sub.add_parser("recipe", help="run a canned analysis end to end")
    p.add_argument("name", choices=sorted(RECIPES))
    p.add_argument("--input", required=True, help="raw or prepared CSV path")
    p.add_argument("--out-dir", default=".", help="directory for the CSV and manifest")
    p.add_argument("--timevar", default=None, metavar="START:STOP:POINTS")
    p.add_argument("--t-star", type=float, default=None)
    p.add_argument("--ci-level", type=float, default=0.95)
    p.add_argument("--nodes", type=int, default=50)
    p.add_argument("--seed", type=int, default=0, help="seed recorded in the manifest")
    return parser


def _config_from_args(args):
    fields = {
        "subcommand": args.subcommand,
        "input": getattr(args, "input", None),
        "out": getattr(args, "out", None),
        "exit_time": getattr(args, "exit_time", None),
        "group": getattr(args, "group", None),
        "df": getattr(args, "df", None),
        "estimand": getattr(args, "estimand", None),
        "contrast": getattr(args, "contrast", None),
        "t_star": getattr(args, "t_star", None),
        "ci_level": getattr(args, "ci_level", 0.95),
        "nodes": getattr(args, "nodes", 50),
        "row_index": getattr(args, "row_index", None),
        "seed": getattr(args, "seed", 0),
        "recipe": getattr(args, "name", None),
        "out_dir": getattr(args, "out_dir", "."),
    }
    if getattr(args, "failure_code", None) is not None:
        fields["failure_code"] = _parse_codes(args.failure_code)
    if getattr(args, "covariates", None) is not None:
        fields["covariates"] = tuple(c.strip() for c in args.covariates.split(",") if c.strip())
    fields["tvc"] = _parse_tvc(getattr(args, "tvc", None))
    if getattr(args, "models", None) is not None:
        fields["models"] = tuple(m.strip() for m in args.models.split(","))
    fields["at"] = _parse_at(getattr(args, "at", None))
    fields["lincom"] = _parse_lincom(getattr(args, "lincom", None))
    if getattr(args, "timevar", None) is not None:
        fields["time_grid"] = _parse_timevar(args.timevar)
    return RunConfig(**fields)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 0
    try:
        config = _config_from_args(args)
        _HANDLERS[config.subcommand](config)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - runtime failure boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
