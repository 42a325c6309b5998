"""Command-line scenario runner.

Every subcommand reads a plain key=value config (with [section] headers),
applies `--set section.key=value` overrides, runs one end-to-end scenario,
and leaves CSV traces plus a grep-friendly `report.txt` in the output
directory.  Unknown keys are rejected with the offending line number; all
floats are serialized with 9 significant digits so reruns diff cleanly.

Exit codes: 0 success, 1 runtime failure inside a scenario (e.g. a design
that cannot place its poles), 2 argument or config validation errors.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import os
import sys

import numpy as np

from .adapt import (
    EvalScenario,
    ExcitationSpec,
    RstDesignSpec,
    iterate,
    save_iteration_csv,
    tracking_cost,
    tracking_run,
)
from .control import (
    HR_NYQUIST_ZERO,
    HS_INTEGRATOR,
    ONE,
    DelayPolynomial,
    PoleSpec,
    bezout_design,
    check_pole_placement,
    controller_to_text,
    desired_poles,
    pi_design,
    sensitivity,
)
from .errors import ConfigError, ValveBenchError
from .fileio import parse_key_values, read_key_values, write_csv, write_report
from .ident import batch_least_squares, build_regressors, order_scan
from .plant import DiscretePlantModel, ValveParams, ValveSimulator, static_sweep
from .presets import PRESET_NAMES, get_preset
from .signals import PrbsConfig, prbs_generate, step_sequence
from .spectral import corner_from_asymptotes, etfe, save_response_csv, slope_fit, smooth

_INT_PLANT_FIELDS = ("adc_bits", "pwm_levels", "rng_seed")


def _plant_keys():
    keys = {"preset": ("strs", ["valve0"]), "Ts": ("float", 0.05)}
    for f in dataclasses.fields(ValveParams):
        kind = "int" if f.name in _INT_PLANT_FIELDS else "float"
        keys[f.name] = (kind, None)
    return keys


_MODEL_KEYS = {
    "a": ("floats", [-0.9152]),
    "b": ("floats", [-0.0609]),
    "delay": ("int", 0),
}
_DESIGN_KEYS = {
    "mode": ("str", "rst"),
    "omega0": ("float", 5.0),
    "zeta": ("float", 1.0),
    "auxiliary": ("floats", [1.0]),
    "integrator": ("bool", True),
    "nyquist_zero": ("bool", True),
}
_OPEN_LOOP_EXCITATION = {
    "n_registers": ("int", 9),
    "divider": ("int", 2),
    "offset": ("float", 16.0),
    "amplitude": ("float", 12.0),
    "seed": ("int", 0),
    "settle": ("float", 5.0),
    "periods": ("int", 3),
    "analyze_periods": ("int", 2),
}
_TRACK_KEYS = {
    "levels": ("floats", [40.0, 65.0, 40.0, 15.0, 40.0]),
    "hold": ("float", 3.0),
    "skip": ("int", 10),
    "settle": ("float", 3.0),
}

SCHEMAS: dict[str, dict[str, dict[str, tuple[str, object]]]] = {
    "sweep": {
        "plant": _plant_keys(),
        "sweep": {"u_max": ("float", 40.0), "step": ("float", 5.0), "hold": ("float", 2.5)},
    },
    "etfe": {
        "plant": _plant_keys(),
        "excitation": _OPEN_LOOP_EXCITATION,
        "spectral": {
            "smooth_window": ("int", 25),
            "slope_lo": ("float", 3.0),
            "slope_hi": ("float", 30.0),
            "plateau_lo": ("float", 0.3),
            "plateau_hi": ("float", 0.8),
        },
    },
    "identify": {
        "plant": _plant_keys(),
        "excitation": _OPEN_LOOP_EXCITATION,
        "identify": {"na": ("int", 1), "nb": ("int", 1), "scan_max": ("int", 3)},
    },
    "design": {
        "model": dict(_MODEL_KEYS, Ts=("float", 0.05)),
        "design": _DESIGN_KEYS,
    },
    "track": {
        "plant": _plant_keys(),
        "model": _MODEL_KEYS,
        "design": _DESIGN_KEYS,
        "track": _TRACK_KEYS,
    },
    "adapt": {
        "plant": _plant_keys(),
        "model": _MODEL_KEYS,
        "design": _DESIGN_KEYS,
        "excitation": {
            "n_registers": ("int", 8),
            "divider": ("int", 4),
            "amplitude": ("float", 10.0),
            "seed": ("int", 0),
            "length": ("int", 300),
        },
        "adapt": {
            "n_iter": ("int", 4),
            "operating_reference": ("float", 40.0),
            "gain": ("float", 1000.0),
            "profile": ("str", "variable-forgetting"),
            "lambda0": ("float", 0.97),
            "warmup": ("int", 40),
            "settle": ("float", 3.0),
            "stop_tol": ("float", 0.0),
            "traces": ("bool", False),
        },
        "track": _TRACK_KEYS,
    },
}


def _parse_value(kind: str, raw: str, where: str):
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw)
        if kind == "bool":
            if raw in ("true", "false"):
                return raw == "true"
            raise ValueError("expected true or false")
        if kind == "floats":
            return [float(p) for p in raw.split(",") if p.strip() != ""]
        if kind == "strs":
            return [p.strip() for p in raw.split(",") if p.strip() != ""]
        return raw  # str
    except ValueError as err:
        raise ConfigError(f"{where}: {err}") from None


def resolve_config(command: str, entries, overrides) -> dict[str, dict[str, object]]:
    """Defaults + config file + --set overrides, validated against the schema."""
    schema = SCHEMAS[command]
    cfg = {sec: {k: spec[1] for k, spec in keys.items()} for sec, keys in schema.items()}

    def apply(section, key, raw, line):
        where = f"line {line}" if line is not None else f"override {section}.{key}"
        if section not in schema:
            raise ConfigError(
                f"{where}: unknown section [{section}] for subcommand '{command}'"
            )
        if key not in schema[section]:
            raise ConfigError(
                f"{where}: unknown key '{key}' in [{section}] for subcommand '{command}'"
            )
        kind = schema[section][key][0]
        cfg[section][key] = _parse_value(kind, raw, f"{where}: key '{key}'")

    for e in entries:
        if not e.section:
            raise ConfigError(f"line {e.line}: key '{e.key}' appears before any [section]")
        apply(e.section, e.key, e.value, e.line)
    for section, key, raw in overrides:
        apply(section, key, raw, None)
    return cfg


def parse_set_args(pairs) -> list[tuple[str, str, str]]:
    out = []
    for p in pairs:
        head, eq, value = p.partition("=")
        section, dot, key = head.partition(".")
        if not eq or not dot or not section or not key:
            raise ConfigError(f"override '{p}' must look like section.key=value")
        out.append((section, key, value.strip()))
    return out


def build_valve_params(plant_cfg: dict, preset: str, seed: int | None) -> ValveParams:
    if preset not in PRESET_NAMES:
        raise ConfigError(f"unknown preset '{preset}' (expected one of {', '.join(PRESET_NAMES)})")
    params = get_preset(preset)
    changes = {
        f.name: plant_cfg[f.name]
        for f in dataclasses.fields(ValveParams)
        if plant_cfg.get(f.name) is not None
    }
    if seed is not None:
        changes["rng_seed"] = seed
    try:
        return dataclasses.replace(params, **changes)
    except ValueError as err:
        raise ConfigError(f"invalid plant parameters: {err}") from None


def _prbs_from(exc: dict) -> PrbsConfig:
    return PrbsConfig(
        n_registers=exc["n_registers"],
        divider=exc["divider"],
        seed=exc["seed"],
        offset=exc["offset"],
        amplitude=exc["amplitude"],
    )


def open_loop_record(params: ValveParams, Ts: float, exc: dict):
    """Settle at the excitation offset, then record a multi-period PRBS run.

    Returns (u, y, period) for the PRBS portion only.
    """
    if exc["periods"] < 1:
        raise ConfigError("excitation periods must be >= 1")
    if not 1 <= exc["analyze_periods"] <= exc["periods"]:
        raise ConfigError("analyze_periods must be in [1, periods]")
    cfg = _prbs_from(exc)
    sim = ValveSimulator(params, Ts)
    for _ in range(int(round(exc["settle"] / Ts))):
        sim.advance(exc["offset"])
    u = prbs_generate(cfg, exc["periods"] * cfg.period)
    y = np.empty(len(u))
    for k in range(len(u)):
        y[k] = sim.measure()
        sim.advance(u[k])
    return u, y, cfg.period


def _analysis_window(u, y, period: int, analyze_periods: int):
    n = analyze_periods * period
    u_w, y_w = u[-n:], y[-n:]
    return u_w - u_w.mean(), y_w - y_w.mean()


def _model_from_cfg(model_cfg: dict, Ts: float) -> DiscretePlantModel:
    a = model_cfg["a"]
    b = model_cfg["b"]
    if not a or not b:
        raise ConfigError("model needs at least one a and one b coefficient")
    return DiscretePlantModel(
        a_coeffs=tuple(a), b_coeffs=tuple(b), delay=model_cfg["delay"], Ts=Ts
    )


def _design_from_cfg(design_cfg: dict, model: DiscretePlantModel):
    """Returns (controller, pole polynomial) for either design mode."""
    pole = PoleSpec(
        omega0=design_cfg["omega0"],
        zeta=design_cfg["zeta"],
        Ts=model.Ts,
        auxiliary=DelayPolynomial(tuple(design_cfg["auxiliary"])),
    )
    target = desired_poles(pole)
    mode = design_cfg["mode"]
    if mode == "pi":
        if model.na != 1 or model.nb != 1 or model.delay != 0:
            raise ConfigError("pi mode needs a first-order model without delay")
        controller = pi_design(model.a_coeffs[0], model.b_coeffs[0], target, Ts=model.Ts)
    elif mode == "rst":
        controller = bezout_design(
            model,
            target,
            hs=HS_INTEGRATOR if design_cfg["integrator"] else ONE,
            hr=HR_NYQUIST_ZERO if design_cfg["nyquist_zero"] else ONE,
        )
    else:
        raise ConfigError(f"design mode must be 'pi' or 'rst', got '{mode}'")
    check_pole_placement(model, controller, target)
    return controller, pole


def _design_spec_from_cfg(design_cfg: dict, model_cfg: dict, Ts: float) -> RstDesignSpec:
    if design_cfg["mode"] != "rst":
        raise ConfigError("adapt re-design supports only mode=rst")
    return RstDesignSpec(
        pole=PoleSpec(
            omega0=design_cfg["omega0"],
            zeta=design_cfg["zeta"],
            Ts=Ts,
            auxiliary=DelayPolynomial(tuple(design_cfg["auxiliary"])),
        ),
        na=len(model_cfg["a"]),
        nb=len(model_cfg["b"]),
        delay=model_cfg["delay"],
        hs=HS_INTEGRATOR if design_cfg["integrator"] else ONE,
        hr=HR_NYQUIST_ZERO if design_cfg["nyquist_zero"] else ONE,
    )


# ---------------------------------------------------------------------------
# Subcommand handlers.  Each writes its artifacts into out_dir and returns
# the report items.


def run_sweep(cfg, out_dir, preset, seed):
    params = build_valve_params(cfg["plant"], preset, seed)
    Ts = cfg["plant"]["Ts"]
    sw = cfg["sweep"]
    if sw["step"] <= 0 or sw["u_max"] <= 0:
        raise ConfigError("sweep u_max and step must be > 0")
    levels = np.arange(0.0, sw["u_max"] + sw["step"] / 2, sw["step"])
    hmap = static_sweep(params, levels, hold=sw["hold"], Ts=Ts)
    write_csv(
        os.path.join(out_dir, "sweep.csv"),
        ["u_pct", "angle_up_deg", "angle_down_deg"],
        [hmap.levels, hmap.angle_up, hmap.angle_down],
    )
    gain_up = float(np.polyfit(hmap.levels, hmap.angle_up, 1)[0])
    gain_down = float(np.polyfit(hmap.levels, hmap.angle_down, 1)[0])
    return [
        ("preset", preset),
        ("hysteresis_width_deg", hmap.width),
        ("static_gain_up_deg_per_pct", gain_up),
        ("static_gain_down_deg_per_pct", gain_down),
    ]


def run_etfe(cfg, out_dir, preset, seed):
    params = build_valve_params(cfg["plant"], preset, seed)
    Ts = cfg["plant"]["Ts"]
    exc = cfg["excitation"]
    sp = cfg["spectral"]
    u, y, period = open_loop_record(params, Ts, exc)
    write_csv(
        os.path.join(out_dir, "excitation.csv"),
        ["t", "u_pct", "angle_deg"],
        [np.arange(len(u)), u, y],
    )
    u_d, y_d = _analysis_window(u, y, period, exc["analyze_periods"])
    raw = etfe(u_d, y_d, Ts)
    smoothed = smooth(raw, size=sp["smooth_window"])
    save_response_csv(os.path.join(out_dir, "etfe_raw.csv"), raw)
    save_response_csv(os.path.join(out_dir, "etfe_smooth.csv"), smoothed)
    slope = slope_fit(smoothed, (sp["slope_lo"], sp["slope_hi"]))
    corner = corner_from_asymptotes(
        smoothed, (sp["plateau_lo"], sp["plateau_hi"]), (sp["slope_lo"], sp["slope_hi"])
    )
    prbs = _prbs_from(exc)
    return [
        ("preset", preset),
        ("n_bins", len(raw.frequencies)),
        ("longest_pulse_s", prbs.longest_pulse(Ts)),
        ("slope_db_per_decade", slope),
        ("corner_rad_s", corner),
    ]


def run_identify(cfg, out_dir, preset, seed):
    params = build_valve_params(cfg["plant"], preset, seed)
    Ts = cfg["plant"]["Ts"]
    idf = cfg["identify"]
    u, y, period = open_loop_record(params, Ts, cfg["excitation"])
    u_d, y_d = _analysis_window(u, y, period, cfg["excitation"]["analyze_periods"])
    write_csv(
        os.path.join(out_dir, "data.csv"),
        ["t", "u_dev_pct", "angle_dev_deg"],
        [np.arange(len(u_d)), u_d, y_d],
    )
    if idf["na"] < 1 or idf["nb"] < 1:
        raise ConfigError("identify na and nb must be >= 1")
    if idf["scan_max"] < max(idf["na"], idf["nb"]):
        raise ConfigError("scan_max must cover the chosen na and nb")
    orders = range(1, idf["scan_max"] + 1)
    table = order_scan(u_d, y_d, orders, orders)
    write_csv(
        os.path.join(out_dir, "orders.csv"),
        ["na", "nb", "cost"],
        [
            [k[0] for k in table],
            [k[1] for k in table],
            [table[k] for k in table],
        ],
    )
    theta, cost = batch_least_squares(build_regressors(u_d, y_d, idf["na"], idf["nb"]))
    items = [("preset", preset), ("na", idf["na"]), ("nb", idf["nb"])]
    items += [(f"theta_{i + 1}", float(v)) for i, v in enumerate(theta)]
    items += [("cost", cost)]
    return items


def run_design(cfg, out_dir, preset, seed):
    del preset, seed  # pure computation, no plant involved
    model = _model_from_cfg(cfg["model"], cfg["model"]["Ts"])
    controller, pole = _design_from_cfg(cfg["design"], model)
    with open(os.path.join(out_dir, "controller.txt"), "w") as fh:
        fh.write(controller_to_text(controller))
    analysis = sensitivity(model, controller)
    write_csv(
        os.path.join(out_dir, "sensitivity.csv"),
        ["omega_rad_s", "syp_db", "sup_db"],
        [analysis.omegas, analysis.syp_db, analysis.sup_db],
    )
    target = desired_poles(pole)
    items = [("mode", cfg["design"]["mode"])]
    items += [(f"p{i}", float(c)) for i, c in enumerate(target.coeffs) if i > 0]
    items += [(f"r{i}", float(c)) for i, c in enumerate(controller.r.coeffs)]
    items += [(f"s{i}", float(c)) for i, c in enumerate(controller.s.coeffs)]
    items += [
        ("t_gain", float(controller.t(1.0))),
        ("max_syp_db", analysis.max_syp_db),
        ("modulus_margin", analysis.modulus_margin),
        ("margin_db", analysis.margin_db),
        ("sup_at_nyquist_db", analysis.sup_db_at_nyquist),
    ]
    return items


def run_track(cfg, out_dir, preset, seed):
    params = build_valve_params(cfg["plant"], preset, seed)
    Ts = cfg["plant"]["Ts"]
    model = _model_from_cfg(cfg["model"], Ts)
    controller, _ = _design_from_cfg(cfg["design"], model)
    tr = cfg["track"]
    scenario = EvalScenario(levels=tuple(tr["levels"]), hold=tr["hold"], skip=tr["skip"])
    reference = scenario.reference(Ts)
    sim = ValveSimulator(params, Ts)
    n_settle = max(1, int(round(tr["settle"] / Ts)))
    y_s, u_s, _ = tracking_run(sim, controller, np.full(n_settle, reference[0]))
    y, u, sat = tracking_run(
        sim, controller, reference, u0=float(u_s[-1]), y0=float(y_s[-1])
    )
    write_csv(
        os.path.join(out_dir, "track.csv"),
        ["t", "r_deg", "angle_deg", "u_pct", "saturated"],
        [np.arange(len(y)), reference, y, u, sat],
    )
    return [
        ("preset", preset),
        ("tracking_cost_deg2", tracking_cost(y, reference, tr["skip"])),
        ("saturation_fraction", float(np.mean(sat))),
    ]


def run_adapt(cfg, out_dir, preset, seed):
    params = build_valve_params(cfg["plant"], preset, seed)
    Ts = cfg["plant"]["Ts"]
    model_cfg = cfg["model"]
    design = _design_spec_from_cfg(cfg["design"], model_cfg, Ts)
    theta0 = np.array(model_cfg["a"] + model_cfg["b"], dtype=float)
    initial = design.design(theta0)
    ad = cfg["adapt"]
    exc_cfg = cfg["excitation"]
    excitation = ExcitationSpec(
        n_registers=exc_cfg["n_registers"],
        divider=exc_cfg["divider"],
        amplitude=exc_cfg["amplitude"],
        seed=exc_cfg["seed"],
        length=exc_cfg["length"],
    )
    tr = cfg["track"]
    scenario = EvalScenario(levels=tuple(tr["levels"]), hold=tr["hold"], skip=tr["skip"])
    sim = ValveSimulator(params, Ts)
    records = iterate(
        sim,
        initial,
        design,
        excitation,
        scenario,
        ad["n_iter"],
        theta0,
        operating_reference=ad["operating_reference"],
        adaptation_gain=ad["gain"],
        profile=ad["profile"],
        lambda0=ad["lambda0"],
        warmup=ad["warmup"],
        settle=ad["settle"],
        stop_tol=ad["stop_tol"] if ad["stop_tol"] > 0 else None,
        trace_dir=out_dir if ad["traces"] else None,
    )
    save_iteration_csv(os.path.join(out_dir, "iterations.csv"), records)
    failures = sum(1 for r in records if r.redesign_error is not None)
    items = [("preset", preset), ("iterations", len(records) - 1)]
    items += [(f"cost_iter_{r.iteration}", r.tracking_cost) for r in records]
    final = records[-1]
    items += [(f"theta_{i + 1}", float(v)) for i, v in enumerate(final.theta_hat)]
    items += [
        ("final_margin_db", final.margin_db),
        ("redesign_failures", failures),
    ]
    return items


HANDLERS = {
    "sweep": run_sweep,
    "etfe": run_etfe,
    "identify": run_identify,
    "design": run_design,
    "track": run_track,
    "adapt": run_adapt,
}


def _execute(command: str, cfg: dict, preset, out_dir: str, seed) -> None:
    os.makedirs(out_dir, exist_ok=True)
    items = HANDLERS[command](cfg, out_dir, preset, seed)
    write_report(os.path.join(out_dir, "report.txt"), items)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="valvebench",
        description="Valve identification and adaptive-control scenarios",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "sweep": "static hysteresis sweep of a valve preset",
        "etfe": "PRBS excitation and spectral estimate",
        "identify": "open-loop batch identification with order scan",
        "design": "PI or robust RST design with sensitivity analysis",
        "track": "closed-loop staircase tracking evaluation",
        "adapt": "iterative closed-loop identification and re-design",
    }
    for name, desc in descriptions.items():
        p = sub.add_parser(name, help=desc)
        p.add_argument("--config", help="key=value config file with [section] headers")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="override one config value (repeatable)",
        )
        p.add_argument("--seed", type=int, help="override the plant noise seed")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument(
            "--parallel",
            type=int,
            default=1,
            metavar="N",
            help="workers for multi-preset runs (default: 1)",
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        entries = read_key_values(args.config) if args.config else []
        overrides = parse_set_args(args.set)
        cfg = resolve_config(args.command, entries, overrides)
        if args.parallel < 1:
            raise ConfigError("--parallel must be >= 1")
        presets = cfg["plant"]["preset"] if "plant" in cfg else [None]
        if not presets:
            raise ConfigError("plant preset list is empty")
        if len(presets) == 1:
            _execute(args.command, cfg, presets[0], args.out, args.seed)
        else:
            jobs = [
                (args.command, cfg, p, os.path.join(args.out, p), args.seed)
                for p in presets
            ]
            if args.parallel > 1:
                with concurrent.futures.ProcessPoolExecutor(args.parallel) as pool:
                    futures = [pool.submit(_execute, *j) for j in jobs]
                    for f in futures:
                        f.result()
            else:
                for j in jobs:
                    _execute(*j)
    except ConfigError as err:
        print(f"valvebench {args.command}: {err}", file=sys.stderr)
        return 2
    except ValveBenchError as err:
        print(f"valvebench {args.command} failed: {err}", file=sys.stderr)
        return 1
    except ValueError as err:
        print(f"valvebench {args.command}: {err}", file=sys.stderr)
        return 2
    return 0


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
