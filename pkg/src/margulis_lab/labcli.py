"""Batch experiment runner: config in, CSV plus verdicts out.

Configurations are JSON (nested key-value text).  A run is fully
determined by the configuration and the code version: re-running with
the same file reproduces the CSV byte for byte.  Exit status is zero
exactly when every asserted inequality passed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

from .errors import ConfigError
from .experiments import REGISTRY, Report, Verdict


def default_config(model_tag, experiment="noop", seed=1234):
    """A complete runnable configuration with fallback calibration.

    The fallback constants are safe but loose; `margulis-lab calibrate`
    replaces them with measured values.
    """
    from . import lattice as lat
    from . import liecore as lc

    model = lc.model_group(model_tag)
    hcfg = lat.default_height_config(model)
    cfg = {
        "model": model_tag,
        "experiment": experiment,
        "seed": seed,
        "output": None,
        "budgets": {
            "order": 64,
            "nodes": 4096,
            "enum": 100000,
            "gamma_budget": 200000,
            "sphere_samples": 100,
            "anchor_samples": 100,
            "height_points": 50,
            "height_nodes": 2048,
            "envelope_points": 200,
            "iteration_points": 10,
            "iter_nodes": 4096,
            "sheet_count_points": 100,
            "drift_points": 20,
            "f_nodes": 384,
            "isolation_samples": 50,
            "isolation_side_samples": 12,
            "avoidance_nodes": 512,
        },
        "grids": {
            "t_grid": [2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0],
            "R_grid": [4.0, 8.0, 16.0, 32.0],
            "heights": [1e2, 1e3, 1e4],
            "height_max": 1e4,
            "t_max": 25.0,
            "contraction_c": 0.5,
            "A_scan": [1.0, 2.0, 4.0],
        },
        "height": {
            "delta_star": hcfg.delta_star,
            "q": list(hcfg.q),
            "c": list(hcfg.c),
            "eps": hcfg.eps,
            "C_star": hcfg.C_star,
            "delta_one_scan": hcfg.delta_one_scan,
            "cocompact": False,
        },
        "window": {"eps_h": 1e-2, "kappa": 6.0},
        "orbits": {"q_list": [1, 2, 3], "q_max": 50,
                   "base_covolume": math.pi ** 2 / 3.0},
        "calibration": {
            "delta_0_scan": 0.1,
            "delta_1_scan": 0.8,
            "t_adjoint": 8.0,
            "t_c": 8.0,
            "B_t": 2.0,
            "C2": 1.0,
            "m": 4.0,
            "sigma0": 1.05,
            "Q": 4.0,
            "lambda": 1.0,
            "delta_F": 0.05,
            "kappa": 6.0,
            "eps_h": 1e-2,
            "t_F": 8.0,
            "E_1": 2.0,
            "C9": 0.4,
        },
    }
    return cfg


_MODEL_TAGS = ("SL2", "SL3", "SL2xSL2")


def validate_config(cfg):
    """Structural validation; raises ConfigError naming the bad field."""
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "configuration must be a mapping")
    model = cfg.get("model")
    if model not in _MODEL_TAGS:
        raise ConfigError("model", f"expected one of {_MODEL_TAGS}, got {model!r}")
    exp = cfg.get("experiment")
    known = sorted(REGISTRY) + ["calibrate"]
    if exp not in known:
        raise ConfigError("experiment", f"unknown experiment {exp!r}; known: {known}")
    if not isinstance(cfg.get("seed"), int):
        raise ConfigError("seed", "must be an integer")
    for block in ("budgets", "grids", "height", "window", "orbits", "calibration"):
        if not isinstance(cfg.get(block), dict):
            raise ConfigError(block, "missing or not a mapping")
    for key, val in cfg["budgets"].items():
        if not isinstance(val, int) or val <= 0:
            raise ConfigError(f"budgets.{key}", "must be a positive integer")
    from . import lattice as lat

    try:
        lat.HeightConfig(
            delta_star=cfg["height"]["delta_star"],
            q=tuple(cfg["height"]["q"]), c=tuple(cfg["height"]["c"]),
            eps=cfg["height"]["eps"], C_star=cfg["height"]["C_star"],
            delta_one_scan=cfg["height"]["delta_one_scan"],
            cocompact=cfg["height"].get("cocompact", False))
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError("height", str(e))
    from . import orbits as orb

    try:
        orb.WindowConfig(eps_h=cfg["window"]["eps_h"], kappa=cfg["window"]["kappa"])
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError("window", str(e))
    qs = cfg["orbits"].get("q_list", [])
    if not all(isinstance(q, int) and 1 <= q <= 50 for q in qs):
        raise ConfigError("orbits.q_list", "entries must be integers in [1, 50]")
    grids = cfg["grids"]
    tg = grids.get("t_grid", [])
    if len(tg) >= 1 and any(b <= a for a, b in zip(tg, tg[1:])):
        raise ConfigError("grids.t_grid", "must be strictly ascending")
    return cfg


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError("<file>", f"cannot read {path}: {e}")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("<file>", f"invalid JSON: {e}")
    return validate_config(cfg)


def bundled_config(model_tag):
    """The calibrated configuration shipped with the package."""
    path = Path(__file__).parent / "configs" / f"{model_tag.lower()}.json"
    return validate_config(json.loads(path.read_text()))


# -- report output ---------------------------------------------------------------


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_csv(report):
    keys = []
    for row in report.rows:
        for k in row:
            if k not in keys:
                keys.append(k)
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys)
    for row in report.rows:
        w.writerow([_fmt(row.get(k, "")) for k in keys])
    return buf.getvalue()


def verdict_text(report):
    lines = [f"experiment: {report.experiment}"]
    for v in report.verdicts:
        status = "PASS" if v.passed else "FAIL"
        line = (f"{status} {v.name} [{v.statement}] margin={_fmt(v.margin)}")
        if not math.isnan(v.lhs):
            line += f" lhs={_fmt(v.lhs)}"
        if not math.isnan(v.rhs):
            line += f" rhs={_fmt(v.rhs)}"
        lines.append(line)
    lines.append("provenance: " + json.dumps(report.provenance, sort_keys=True,
                                             default=_fmt))
    lines.append(f"result: {'PASS' if report.passed else 'FAIL'}")
    return "\n".join(lines) + "\n"


def write_report(report, outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / f"{report.experiment}.csv"
    csv_path.write_text(report_csv(report))
    (outdir / f"{report.experiment}.verdicts.txt").write_text(verdict_text(report))
    return csv_path


def run(config):
    """Dispatch the named experiment; write outputs when configured."""
    validate_config(config)
    name = config["experiment"]
    if name == "calibrate":
        report = _run_calibrate(config)
    else:
        report = REGISTRY[name](config)
    if config.get("output"):
        write_report(report, config["output"])
    return report


def _run_calibrate(config):
    from .calibrate import calibrate_model

    cal, height = calibrate_model(config["model"], seed=config["seed"])
    rows = [{"constant": k, "value": v} for k, v in sorted(cal.items())]
    rows += [{"constant": f"height.{k}", "value": v}
             for k, v in sorted(height.items()) if not isinstance(v, list)]
    verdicts = [Verdict(name="calibration-complete", statement="calibration",
                        passed=True, margin=0.0)]
    return Report("calibrate", rows, verdicts,
                  {"model": config["model"], "calibration": cal, "height": height})


def calibrated_config(model_tag, seed=1234, verbose=False):
    """Build a full configuration with freshly measured constants."""
    from .calibrate import calibrate_model

    cfg = default_config(model_tag, seed=seed)
    cal, height = calibrate_model(model_tag, seed=seed, verbose=verbose)
    cfg["calibration"].update(cal)
    cfg["height"] = height
    cfg["window"] = {"eps_h": cal["eps_h"], "kappa": cal["kappa"]}
    return validate_config(cfg)


# -- command line ------------------------------------------------------------------


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="margulis-lab",
        description="batch experiments for averaging operators on lattice spaces")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--experiment", help="override the configured experiment")
    p_run.add_argument("--output", help="override the output directory")
    p_run.add_argument("--seed", type=int, help="override the seed")

    p_cal = sub.add_parser("calibrate",
                           help="measure constants and write a full config")
    p_cal.add_argument("--model", required=True, choices=_MODEL_TAGS)
    p_cal.add_argument("--out", required=True)
    p_cal.add_argument("--seed", type=int, default=1234)
    p_cal.add_argument("--verbose", action="store_true")

    sub.add_parser("list-experiments", help="print the experiment registry")

    args = parser.parse_args(argv)
    if args.command == "list-experiments":
        for name in sorted(REGISTRY) + ["calibrate"]:
            print(name)
        return 0
    if args.command == "calibrate":
        cfg = calibrated_config(args.model, seed=args.seed, verbose=args.verbose)
        Path(args.out).write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
        print(f"wrote calibrated config to {args.out}")
        return 0
    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    if args.experiment:
        cfg["experiment"] = args.experiment
    if args.output:
        cfg["output"] = args.output
    if args.seed is not None:
        cfg["seed"] = args.seed
    try:
        cfg = validate_config(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    report = run(cfg)
    sys.stdout.write(verdict_text(report))
    return 0 if report.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
