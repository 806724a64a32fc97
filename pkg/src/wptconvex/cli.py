"""Command-line interface.

    wptconvex curve            --out curve.csv [--scenario s.json]
    wptconvex check-convexity  --out cert.csv
    wptconvex position         --scenario s.json --init centroid --out trace.json
    wptconvex brute            --scenario s.json --resolution 0.01 --out grid.json
    wptconvex compare          --scenario s.json --out report.json
    wptconvex gen-scenario     --n-receivers 5 --width 5 --seed 1 --out s.json

Exit codes: 0 success, 2 validation error, 3 solver did not converge, 4 grid refused.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .calculus import ParamCurve, certify_convexity
from .errors import DomainError, GridTooLargeError, ValidationError
from .positioning import Scenario, exhaustive_search, generate_scenario, sia_solve
from .rectifier import RectifierParams, build_model, solve_iout
from .waveforms import Waveform, WaveformKind, builtin_waveform, custom_waveform

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NOT_CONVERGED = 3
EXIT_GRID_REFUSED = 4

SCENARIO_FIELDS = ("receivers", "q0_dbm", "box", "diode", "waveform", "tx_power_dbm")
DIODE_FIELDS = {
    "i_s": "i_s",
    "n": "n_ideality",
    "v_t": "v_t",
    "r_ant": "r_ant",
    "r_load": "r_load",
    "trunc_order": "trunc_order",
}


class ScenarioFileError(ValidationError):
    pass


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts) + 30.0


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _fail(path, text, key, message):
    line = _line_of(text, key) if key else None
    where = f"{path}:{line}" if line else str(path)
    raise ScenarioFileError(f"{where}: {message}")


def make_waveform(spec, order: int) -> Waveform:
    if isinstance(spec, str):
        return builtin_waveform(spec, order)
    if isinstance(spec, dict):
        return custom_waveform(spec)
    raise ValidationError(f"waveform must be a name or an order->factor map, got {spec!r}")


def scenario_from_dict(data: dict, path="<scenario>", text: str = "") -> Scenario:
    """Validate a parsed scenario document; errors point at the offending line."""
    if not isinstance(data, dict):
        raise ScenarioFileError(f"{path}: top level must be an object")
    for key in data:
        if key not in SCENARIO_FIELDS:
            _fail(path, text, key, f"unknown field {key!r}")
    if "receivers" not in data:
        raise ScenarioFileError(f"{path}: missing field 'receivers'")
    if "q0_dbm" not in data:
        raise ScenarioFileError(f"{path}: missing field 'q0_dbm'")

    diode = data.get("diode", {})
    if not isinstance(diode, dict):
        _fail(path, text, "diode", "diode must be an object")
    kwargs = {}
    for key, value in diode.items():
        if key not in DIODE_FIELDS:
            _fail(path, text, key, f"unknown diode field {key!r}")
        kwargs[DIODE_FIELDS[key]] = value
    try:
        params = RectifierParams(**kwargs)
    except ValidationError as exc:
        bad = next((k for k, v in DIODE_FIELDS.items() if v in str(exc).split()[0]), "diode")
        _fail(path, text, bad, str(exc))

    try:
        waveform = make_waveform(data.get("waveform", "cw"), params.trunc_order)
        model = build_model(params, waveform)
    except ValidationError as exc:
        _fail(path, text, "waveform", str(exc))

    q0_dbm = data["q0_dbm"]
    if isinstance(q0_dbm, bool) or not isinstance(q0_dbm, (int, float)) or not math.isfinite(q0_dbm):
        _fail(path, text, "q0_dbm", f"q0_dbm must be a finite number, got {q0_dbm!r}")
    tx = data.get("tx_power_dbm")
    if tx is not None and (isinstance(tx, bool) or not isinstance(tx, (int, float))):
        _fail(path, text, "tx_power_dbm", f"tx_power_dbm must be a number, got {tx!r}")

    receivers = data["receivers"]
    if not isinstance(receivers, list) or not all(
        isinstance(r, list) and len(r) == 2 and all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in r)
        for r in receivers
    ):
        _fail(path, text, "receivers", "receivers must be a list of [x, y] number pairs")
    try:
        return Scenario(
            np.array(receivers, dtype=float).reshape(-1, 2),
            dbm_to_watts(float(q0_dbm)),
            model,
            box=data.get("box"),
            q0_dbm=float(q0_dbm),
            tx_power_dbm=None if tx is None else float(tx),
        )
    except ValidationError as exc:
        key = "box" if "box" in str(exc) else "receivers"
        _fail(path, text, key, str(exc))


def load_scenario(path) -> Scenario:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioFileError(f"{path}:{exc.lineno}: {exc.msg}") from None
    return scenario_from_dict(data, path, text)


def scenario_to_dict(scenario: Scenario) -> dict:
    p = scenario.model.params
    return {
        "receivers": [[float(x), float(y)] for x, y in scenario.receivers],
        "q0_dbm": scenario.q0_dbm if scenario.q0_dbm is not None else watts_to_dbm(scenario.q0),
        "box": list(scenario.box),
        "diode": {
            "i_s": p.i_s,
            "n": p.n_ideality,
            "v_t": p.v_t,
            "r_ant": p.r_ant,
            "r_load": p.r_load,
            "trunc_order": p.trunc_order,
        },
        "waveform": _waveform_spec(scenario.model.waveform),
        "tx_power_dbm": scenario.tx_power_dbm,
    }


def dumps(obj) -> str:
    """Canonical JSON: 2-space indent, innermost number lists on one line."""
    text = json.dumps(obj, indent=2, allow_nan=True)
    text = re.sub(
        r"\[\s*([-+0-9.eE, \n]*?)\s*\]",
        lambda m: "[" + ", ".join(s.strip() for s in m.group(1).split(",") if s.strip()) + "]",
        text,
    )
    return text + "\n"


def dump_scenario(scenario: Scenario) -> str:
    return dumps(scenario_to_dict(scenario))


# -- argument handling -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wptconvex", description=__doc__.splitlines()[0] if __doc__ else None)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario_required=False):
        p.add_argument("--scenario", required=scenario_required, help="scenario JSON file")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--waveform", help="builtin waveform name (cw, gaussian)")
        p.add_argument("--i-s", type=float, dest="i_s")
        p.add_argument("--n-ideality", type=float)
        p.add_argument("--v-t", type=float, dest="v_t")
        p.add_argument("--r-ant", type=float)
        p.add_argument("--r-load", type=float)
        p.add_argument("--trunc-order", type=int)
        p.add_argument("--q0-dbm", type=float)

    for name in ("curve", "check-convexity"):
        p = sub.add_parser(name)
        common(p)
        p.add_argument("--q-min", type=float, default=1e-6, help="smallest received power (W)")
        p.add_argument("--q-max", type=float, default=1.0, help="largest received power (W)")
        p.add_argument("--points", type=int, default=200)
        if name == "check-convexity":
            p.add_argument("--summary", help="write the certificate summary JSON here (default: stderr)")

    def sia_flags(p):
        p.add_argument("--tol", type=float, default=1e-6, help="relative objective change to stop")
        p.add_argument("--max-iters", type=int, default=100)

    def grid_flags(p):
        p.add_argument("--resolution", type=float, default=0.01, help="grid spacing (m)")
        p.add_argument("--grid-override", action="store_true", help="allow grids above the cell cap")
        p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("position")
    common(p, scenario_required=True)
    sia_flags(p)
    p.add_argument("--init", default="centroid", help="x,y | centroid | near-receiver:<n>")

    p = sub.add_parser("brute")
    common(p, scenario_required=True)
    grid_flags(p)

    p = sub.add_parser("compare")
    common(p, scenario_required=True)
    sia_flags(p)
    grid_flags(p)
    p.add_argument("--init", default="near-receiver:0", help="the poorly placed start; the centroid start is always run")

    p = sub.add_parser("gen-scenario")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--n-receivers", type=int, default=5)
    p.add_argument("--width", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--q0-dbm", type=float, default=10.0)
    p.add_argument("--tx-power-dbm", type=float, default=30.0)
    p.add_argument("--waveform", default="cw")
    return parser


def _waveform_spec(wf: Waveform | None):
    """Builtin name, or the factor map without the implied lambda_2."""
    if wf is None:
        return "cw"
    if wf.name in {k.value for k in WaveformKind}:
        return wf.name
    return {str(k): v for k, v in wf.lambda_factors.items() if k != 2}


def _resolve_model(args, scenario: Scenario | None):
    base = scenario.model if scenario else None
    overrides = {
        k: getattr(args, k)
        for k in ("i_s", "n_ideality", "v_t", "r_ant", "r_load", "trunc_order")
        if getattr(args, k, None) is not None
    }
    params = replace(base.params if base else RectifierParams(), **overrides)
    spec = args.waveform if args.waveform else _waveform_spec(base.waveform if base else None)
    return build_model(params, make_waveform(spec, params.trunc_order))


def _resolve_scenario(args) -> Scenario:
    scenario = load_scenario(args.scenario)
    model = _resolve_model(args, scenario)
    if args.q0_dbm is not None:
        q0, q0_dbm = dbm_to_watts(args.q0_dbm), args.q0_dbm
    else:
        q0, q0_dbm = scenario.q0, scenario.q0_dbm
    return Scenario(scenario.receivers, q0, model, scenario.box, q0_dbm, scenario.tx_power_dbm)


def _model_for_curves(args):
    return _resolve_model(args, load_scenario(args.scenario) if args.scenario else None)


def _parse_init(spec: str, scenario: Scenario) -> np.ndarray:
    spec = spec.strip()
    if spec == "centroid":
        return scenario.centroid()
    if spec.startswith("near-receiver"):
        _, _, idx = spec.partition(":")
        try:
            return scenario.near_receiver(int(idx) if idx else 0)
        except ValueError:
            raise ValidationError(f"bad --init {spec!r}") from None
    try:
        x, y = (float(v) for v in spec.split(","))
    except ValueError:
        raise ValidationError(f"bad --init {spec!r}; expected x,y | centroid | near-receiver:<n>") from None
    return np.array([x, y])


def _config(args, scenario=None, model=None) -> dict:
    cfg = {"version": __version__}
    for key, value in sorted(vars(args).items()):
        if key != "out":
            cfg["scenario_path" if key == "scenario" else key] = value
    if scenario is not None:
        cfg["scenario"] = scenario_to_dict(scenario)
    elif model is not None:
        p = model.params
        cfg["diode"] = {"i_s": p.i_s, "n": p.n_ideality, "v_t": p.v_t, "r_ant": p.r_ant, "r_load": p.r_load,
                        "trunc_order": p.trunc_order}
        cfg["waveform_factors"] = {str(k): v for k, v in model.waveform.lambda_factors.items()}
    return cfg


def _emit(args, text: str):
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _power_grid(args):
    if not (0 < args.q_min < args.q_max) or args.points < 5:
        raise ValidationError("need 0 < q-min < q-max and at least 5 points")
    return np.logspace(math.log10(args.q_min), math.log10(args.q_max), args.points)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def cmd_curve(args) -> int:
    model = _model_for_curves(args)
    q = _power_grid(args)
    current = solve_iout(model, q)
    power = model.params.r_load * current**2
    rows = zip(q, 1.0 / q, current, power)
    _emit(args, _csv(["q_rf_w", "u_inv_w", "i_out_a", "p_dc_w"], rows))
    return EXIT_OK


def cmd_check_convexity(args) -> int:
    model = _model_for_curves(args)
    q = _power_grid(args)
    u = np.sort(1.0 / q)
    report = certify_convexity(model, ParamCurve.reciprocal(1.0), u)
    rows = (
        (r["q_rf_w"], r["u"], r["i_out_a"], r["p_dc_w"], r["second_diff"], r["cond9"], r["cond14"])
        for r in report.rows()
    )
    _emit(args, _csv(["q_rf_w", "u_inv_w", "i_out_a", "p_dc_w", "second_diff", "cond9", "cond14"], rows))
    summary = dumps({"config": _config(args, model=model), "report": report.summary()})
    if args.summary:
        Path(args.summary).write_text(summary)
    else:
        sys.stderr.write(summary)
    return EXIT_OK


def cmd_position(args) -> int:
    scenario = _resolve_scenario(args)
    init = _parse_init(args.init, scenario)
    trace = sia_solve(scenario, init, max_iters=args.max_iters, rel_tol=args.tol)
    out = {"config": _config(args, scenario), "trace": trace.as_dict()}
    _emit(args, dumps(out))
    return EXIT_OK if trace.converged else EXIT_NOT_CONVERGED


def cmd_brute(args) -> int:
    scenario = _resolve_scenario(args)
    result = exhaustive_search(scenario, args.resolution, override=args.grid_override, workers=args.workers)
    _emit(args, dumps({"config": _config(args, scenario), "result": result.as_dict()}))
    return EXIT_OK


def cmd_compare(args) -> int:
    scenario = _resolve_scenario(args)
    good = sia_solve(scenario, scenario.centroid(), max_iters=args.max_iters, rel_tol=args.tol)
    bad = sia_solve(scenario, _parse_init(args.init, scenario), max_iters=args.max_iters, rel_tol=args.tol)
    grid = exhaustive_search(scenario, args.resolution, override=args.grid_override, workers=args.workers)
    best = max(good.final_objective, bad.final_objective)
    out = {
        "config": _config(args, scenario),
        "ini_good": good.as_dict(),
        "ini_bad": bad.as_dict(),
        "exhaustive": grid.as_dict(),
        "summary": {
            "final_distance_m": float(np.hypot(*(good.final_position - bad.final_position))),
            "ini_good_iterations": good.n_iterations,
            "ini_bad_iterations": bad.n_iterations,
            "rel_gap_to_exhaustive": (grid.best_value - best) / grid.best_value,
        },
    }
    _emit(args, dumps(out))
    return EXIT_OK if good.converged and bad.converged else EXIT_NOT_CONVERGED


def cmd_gen_scenario(args) -> int:
    params = RectifierParams()
    model = build_model(params, make_waveform(args.waveform, params.trunc_order))
    sc = generate_scenario(args.n_receivers, args.width, args.seed, dbm_to_watts(args.q0_dbm), model)
    sc = Scenario(sc.receivers, sc.q0, model, sc.box, args.q0_dbm, args.tx_power_dbm)
    _emit(args, dump_scenario(sc))
    return EXIT_OK


COMMANDS = {
    "curve": cmd_curve,
    "check-convexity": cmd_check_convexity,
    "position": cmd_position,
    "brute": cmd_brute,
    "compare": cmd_compare,
    "gen-scenario": cmd_gen_scenario,
}


def _error(kind: str, exc: Exception, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc), "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except GridTooLargeError as exc:
        return _error("grid_refused", exc, EXIT_GRID_REFUSED)
    except (ValidationError, DomainError) as exc:
        return _error("validation_error", exc, EXIT_VALIDATION)
    except OSError as exc:
        return _error("io_error", exc, EXIT_VALIDATION)


if __name__ == "__main__":
    sys.exit(main())
