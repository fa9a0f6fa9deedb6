"""Command-line front end.

Exit codes: 0 success, 1 model/runtime error or failed check, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis
from . import boiler_core as bc
from .errors import BoilerError, ScenarioError, SimulationError
from .sim_engine import (builtin_scenarios, convergence_check, initialize, load_scenario,
                         max_stable_dt, run, schema_keys)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _epilog() -> str:
    keys = "\n".join(f"  {k}" for k in schema_keys())
    return ("scenario: a JSON file or a built-in name ("
            + ", ".join(builtin_scenarios()) + ")\n"
            "scenario keys (usable with --set KEY=VALUE, VALUE parsed as JSON):\n" + keys)


def _dump(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _overrides(args) -> list:
    items = list(args.set or [])
    if getattr(args, "dt", None) is not None:
        items.append(("integration.dt", args.dt))
    if getattr(args, "no_omega", False):
        items.append(("integration.omega_enabled", False))
    return items


def _scenario(args):
    return load_scenario(args.scenario, _overrides(args))


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _report(ok: bool, label: str) -> int:
    print(f"{label}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


# --------------------------------------------------------------------------
# subcommands


def cmd_init(args) -> int:
    sc = _scenario(args)
    params, state, inputs = initialize(sc)
    residual = bc.steady_residual(state, inputs, params)
    norm = float(np.max(np.abs(residual)))
    out = _outdir(args)
    _dump(out / f"{sc.name}.state.json", {
        "state": state.to_dict(), "inputs": vars(inputs), "params": params.to_dict(),
        "residual_max_norm": norm, "dt_stability_limit": max_stable_dt(state, inputs, params)})
    print(f"steady-state residual max-norm: {norm:.3e}")
    print(f"f_wstar = {state.f_wstar:.6g} kg/s, Q_T = {inputs.Q_T:.6g} W")
    return _report(norm < 1e-8, "residual < 1e-8")


def _run_one(source: str, overrides: list, out: str) -> tuple[str, str | None]:
    sc = load_scenario(source, overrides)
    traj = run(sc)
    out = Path(out)
    traj.to_csv(out / f"{sc.name}.csv")
    _dump(out / f"{sc.name}.summary.json", {"name": sc.name, "samples": len(traj.t),
                                            "diagnostics": traj.diagnostics})
    return sc.name, None


def cmd_run(args) -> int:
    out = _outdir(args)
    src = Path(args.scenario)
    if src.is_dir():
        files = sorted(src.glob("*.json"))
        if not files:
            raise ScenarioError(f"no *.json scenarios in {src}")
        # validate everything before spending time integrating
        for f in files:
            load_scenario(f, _overrides(args))
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_run_one, str(f), _overrides(args), str(out)) for f in files]
            for fut in futures:
                name, _ = fut.result()
                print(f"wrote {out / (name + '.csv')}")
        return EXIT_OK
    name, _ = _run_one(args.scenario, _overrides(args), str(out))
    print(f"wrote {out / (name + '.csv')}")
    return EXIT_OK


def cmd_alpha_ratio(args) -> int:
    sc = _scenario(args)
    traj = run(sc)
    series = analysis.alpha_ratio(traj)
    out = _outdir(args)
    series.to_csv(out / f"{sc.name}.alpha_ratio.csv")
    n = traj.n
    dev = {k: series.max_deviation(k) for k in range(1, n + 1)}
    varying = np.ptp(traj.q_s) > 0 or np.ptp(traj.Q_T) > 0 or np.ptp(traj.q_f) > 0
    if varying:
        ok = dev[n] > dev[2]
        label = f"max |abar_{n} - 1| > max |abar_2 - 1|"
    else:
        ok = max(dev.values()) < 1e-3
        label = "max_k |abar_k - 1| < 1e-3"
    _dump(out / f"{sc.name}.alpha_ratio.json", {
        "max_deviation": {str(k): v for k, v in dev.items()},
        "last_exceedance_1e-3": series.last_exceedance(n, 1e-3),
        "undefined_samples": int(series.undefined.sum()), "check": label, "passed": ok})
    for k, v in dev.items():
        print(f"abar_{k}: max deviation {v:.4e}")
    return _report(ok, label)


def cmd_proportionality(args) -> int:
    sc = _scenario(args)
    traj = run(sc)
    rep = analysis.proportionality_report(traj)
    out = _outdir(args)
    _dump(out / f"{sc.name}.proportionality.json", rep.summary())
    if rep.pade is not None:
        rep.pade.to_csv(out / f"{sc.name}.pade.csv")
    corr = rep.correlation
    print(f"dominance ratio {rep.dominance_ratio:.4g}, lambda_1 {rep.lambda_1:.4g} Pa/kg")
    print("correlation(q_s, delta): " + ("undefined (constant series)" if corr is None
                                         else f"{corr:.4f}"))
    ok = rep.dominance_ratio >= 100 and corr is not None and corr > 0.5
    return _report(ok, "dominance >= 100 and correlation > 0.5")


def cmd_pade_compare(args) -> int:
    sc = _scenario(args)
    traj = run(sc)
    a = args.a if args.a is not None else float(traj.derived[0, bc.DA])
    dt = float(traj.t[1] - traj.t[0])
    cmp_ = analysis.pade_delay_compare(traj.f_s, dt, a)
    out = _outdir(args)
    cmp_.to_csv(out / f"{sc.name}.pade.csv")
    summary = cmp_.summary()
    summary["pade_settling_95_theory"] = analysis.pade_settling_theory(a)
    _dump(out / f"{sc.name}.pade.json", summary)
    print(f"a = {a:.4g} s, RMS {cmp_.rms:.4e} kg ({100 * cmp_.rms_rel_range:.3f}% of range)")
    return _report(cmp_.rms_rel_range < 0.05, "RMS discrepancy < 5% of range")


def cmd_omega_effect(args) -> int:
    sc = _scenario(args)
    eff = analysis.omega_effect(sc)
    out = _outdir(args)
    eff.to_csv(out / f"{sc.name}.omega_effect.csv")
    _dump(out / f"{sc.name}.omega_effect.json", eff.summary())
    print(f"max |delta_omega - delta_0| = {eff.max_difference:.4e} m, "
          f"noise floor {eff.noise_floor:.4e} m")
    return _report(eff.significant, "difference > 10x dt-halving noise")


def cmd_convergence(args) -> int:
    sc = _scenario(args)
    dts = [float(x) for x in args.dts.split(",")]
    rows = convergence_check(sc, dts)
    out = _outdir(args)
    _dump(out / f"{sc.name}.convergence.json", rows)
    for r in rows:
        order = "-" if r["order"] is None else f"{r['order']:.3f}"
        print(f"dt {r['dt_coarse']:g} -> {r['dt_fine']:g}: max delta diff "
              f"{r['max_delta_diff']:.4e} m, order {order}")
    diffs = [r["max_delta_diff"] for r in rows]
    shrinking = all(b <= a for a, b in zip(diffs, diffs[1:]))
    rel = max(r["max_delta_diff"] / max(r["max_abs_delta"], 1e-300) for r in rows)
    return _report(shrinking and rel < 0.02,
                   "differences shrink and max |delta| changes < 2%")


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    epilog = _epilog()
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(prog="boilersim", description=__doc__,
                                     epilog=epilog, formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_, epilog=epilog,
                           formatter_class=fmt)
        p.add_argument("--scenario", required=True,
                       help="scenario JSON file, built-in name, or (run only) a directory")
        p.add_argument("-o", "--out", default="out", help="output directory (default: out)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a scenario key; repeatable")
        p.add_argument("--dt", type=float, help="override integration.dt [s]")
        p.add_argument("--no-omega", action="store_true",
                       help="drop the riser momentum rate from the downcomer equation")
        p.set_defaults(func=func)
        return p

    add("init", cmd_init, "solve the steady state and write it as JSON")
    p = add("run", cmd_run, "integrate a scenario and write the trajectory CSV")
    p.add_argument("--jobs", type=int, default=None, help="worker processes for a directory")
    add("alpha-ratio", cmd_alpha_ratio, "steam quality ratio abar_k = alpha_k/(k alpha_1)")
    add("proportionality", cmd_proportionality,
        "drum level vs steam flow correlation and pressure-coefficient dominance")
    p = add("pade-compare", cmd_pade_compare, "exact delay vs first-order Pade filter")
    p.add_argument("--a", type=float, help="delay for both models [s] (default: initial a)")
    add("omega-effect", cmd_omega_effect, "drum level with and without the momentum rate term")
    p = add("convergence", cmd_convergence, "self-convergence under halving dt")
    p.add_argument("--dts", default="0.01,0.005,0.0025",
                   help="comma-separated halving step sizes [s]")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        if exc.state is not None:
            print("state at failure: " + json.dumps(exc.state.to_dict(), default=_json_default),
                  file=sys.stderr)
        return EXIT_FAIL
    except BoilerError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
