"""fisvvc command line: validate, infer, run, compare."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, FisVvcError, MetricsError, RuleBaseError
from .fis import explain
from .metrics import FIELD_TRIAL_FACTORS, comparison_report, cvr_savings, truncate
from .rules import format_rule, read_rulebase
from .scenario import CONTROLLERS, MARKER, default_scenario_path, load_scenario, read_run, run_scenario, write_run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_IO = 4


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def cmd_validate(args) -> int:
    scn, errors = load_scenario(args.scenario)
    if errors:
        for e in errors:
            _err(str(e))
        print(f"{len(errors)} error(s)", file=sys.stderr)
        return EXIT_CONFIG
    if scn.rulebase is not None:
        rb = scn.rulebase
        print(f"{len(rb.rules)} rules, {len(rb.inputs)} inputs, {len(rb.outputs)} outputs")
    print(f"scenario {scn.name}: {len(scn.times)} samples, controller {scn.controller}")
    return EXIT_OK


def _parse_assignments(items: list[str]) -> dict[str, float]:
    values = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"expected NAME=VALUE, got {item!r}", token=item)
        try:
            values[name.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"input {name} is not a number: {value!r}", token=value) from None
    return values


def cmd_infer(args) -> int:
    if args.rules or args.declarations:
        if not (args.rules and args.declarations):
            raise ConfigError("--rules and --declarations go together")
        rb = read_rulebase(args.declarations, args.rules)
    else:
        scn, errors = load_scenario(args.scenario)
        if errors:
            raise RuleBaseError(errors)
        if scn.rulebase is None:
            raise ConfigError("scenario has no rulebase")
        rb = scn.rulebase
    result = explain(rb, _parse_assignments(args.inputs))
    if args.json:
        print(json.dumps({"fuzzified": result.fuzzified, "activations": list(result.activations),
                          "outputs": result.outputs}, indent=2))
        return EXIT_OK
    print("fuzzified:")
    for name in rb.inputs:
        degrees = "  ".join(f"{s}={d:.4f}" for s, d in result.fuzzified[name].items())
        print(f"  {name}: {degrees}")
    print("activations:")
    for i, (rule, alpha) in enumerate(zip(rb.rules, result.activations), start=1):
        print(f"  {i:>2}  {alpha:.4f}  {format_rule(rule)}")
    print("outputs:")
    for name, value in result.outputs.items():
        note = "" if result.fired[name] else "  (no rule fired, neutral)"
        print(f"  {name} = {value:.6f}{note}")
    return EXIT_OK


def cmd_run(args) -> int:
    scn, errors = load_scenario(args.scenario)
    if errors:
        raise RuleBaseError(errors)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / MARKER
    marker.write_text("run started\n", encoding="utf-8")
    try:
        result = run_scenario(scn, controller=args.controller, seed=args.seed, ref_kv=args.ref_kv)
        write_run(result, out)
    except Exception as exc:
        marker.write_text(f"run failed: {type(exc).__name__}: {exc}\n", encoding="utf-8")
        raise
    marker.unlink()
    m = result.metrics
    print(f"{m['samples']} samples written to {out}")
    print(f"U mean {m['mean_kv']:.4f} kV, D_M {m['max_dev_kv']:.4f} kV, D_m {m['mean_dev_kv']:.4f} kV, "
          f"tap ops {m['tap_ops']}, capacitor ops {m['capacitor_ops']}")
    return EXIT_OK


def _cvr_block(dv: float) -> str:
    kwh, kw, kvar = cvr_savings(dv, FIELD_TRIAL_FACTORS)
    return (f"voltage reduction {dv:.2f} %: expected savings {truncate(kwh):.2f} % kWh, "
            f"{truncate(kw):.2f} % kW, {truncate(kvar):.2f} % kVAr")


def cmd_compare(args) -> int:
    if args.delta_v is not None and not args.runs:
        print(_cvr_block(args.delta_v))
        return EXIT_OK
    if len(args.runs) < 2:
        raise ConfigError("compare needs at least two run directories")
    runs = [read_run(d) for d in args.runs]
    names = [r.name for r in runs]
    if len(set(names)) != len(names):
        for i, r in enumerate(runs):
            r.name = f"{i}:{r.name}"
    if not 0 <= args.baseline < len(runs):
        raise ConfigError(f"--baseline must index one of the {len(runs)} runs")
    report = comparison_report(runs, ref_kv=args.ref_kv, baseline=args.baseline, windows=args.window)
    text = report.to_text()
    if args.delta_v is not None:
        text += "\n" + _cvr_block(args.delta_v) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")
        (out / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fisvvc", description="Fuzzy volt/var control of a substation.")
    sub = ap.add_subparsers(dest="command", required=True)
    default = str(default_scenario_path())

    p = sub.add_parser("validate", help="load a scenario and report every problem")
    p.add_argument("--scenario", default=default)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("infer", help="one inference with intermediate values")
    p.add_argument("inputs", nargs="*", metavar="NAME=VALUE")
    p.add_argument("--scenario", default=default)
    p.add_argument("--rules")
    p.add_argument("--declarations")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("run", help="closed-loop simulation")
    p.add_argument("--scenario", default=default)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--ref-kv", type=float)
    p.add_argument("--controller", choices=CONTROLLERS)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="comparison report over run directories")
    p.add_argument("runs", nargs="*", metavar="RUN_DIR")
    p.add_argument("--baseline", type=int, default=0, help="index of the baseline run")
    p.add_argument("--window", action="append", default=[], metavar="HH:MM:SS-HH:MM:SS")
    p.add_argument("--ref-kv", type=float, default=21.0)
    p.add_argument("--delta-v", type=float, help="also print the CVR block for this voltage reduction (%%)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, RuleBaseError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        _err(str(exc))
        return EXIT_IO
    except (FisVvcError, MetricsError) as exc:
        _err(str(exc))
        return EXIT_RUNTIME
    except OSError as exc:
        _err(str(exc))
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
