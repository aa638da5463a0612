"""Command-line front end.

Every subcommand reads an optional JSON config (``--config``), layers it over
command defaults and an optional named preset, rejects unknown keys, and
writes its outputs plus a ``metadata.json`` holding the resolved config,
seed and package version into ``--out``.

Exit codes: 0 success, 2 config error, 3 numerical-capacity error,
1 any other failure.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .core import Ensemble, PureState, Unitary2, canonical_ensembles, helstrom_bound
from .discrimination import (
    build_map_rule,
    expected_multi_copy_error,
    log_error_slope,
    outcome_table,
    single_copy_error,
)
from .errors import CapacityError, NoEventsInWindowError, QSDError, ValidationError
from .experiment import (
    NoiseModel,
    derive_seed,
    end_to_end_error_curve,
    estimate_background,
    postselect_k_photon,
    simulate_run,
    subtract_background,
    total_variation,
)
from .formats import (
    curve_to_csv,
    distribution_to_csv,
    distribution_to_json,
    dump_json,
    outcome_table_to_csv,
    record_to_csv,
    sink_table_to_csv,
    trace_to_csv,
    write_text,
)
from .network import (
    ExtractionSchedule,
    NetworkConfig,
    conditional_distribution,
    cumulative_correct,
    decay_free_distribution,
    evolve,
)
from .presets import PRESETS, SCHEDULES, named_receiver
from .receivers import ObjectiveSpec, optimize

ENSEMBLE_KEYS = {"preset", "ensemble", "states", "priors", "labels", "seed"}
NETWORK_KEYS = ENSEMBLE_KEYS | {"receiver", "schedule", "max_loops"}

ALLOWED = {
    "simulate": NETWORK_KEYS | {"inputs", "sink_map"},
    "discriminate": NETWORK_KEYS,
    "optimize": (ENSEMBLE_KEYS | {"schedule", "max_loops"})
    | {"variant", "window", "sink", "restarts", "max_iters", "xatol", "fatol"},
    "scaling": NETWORK_KEYS | {"m_max", "exact_max", "trials", "columns", "max_compositions"},
    "montecarlo": NETWORK_KEYS
    | {"inputs", "noise", "duration", "records", "background_records", "window_sigmas", "k_values", "runs_per_k", "mode", "blind", "floor"},
    "states": ENSEMBLE_KEYS,
}

DEFAULTS = {
    "simulate": {"schedule": "ideal", "max_loops": 12, "inputs": None, "sink_map": [5, 6]},
    "discriminate": {"schedule": "ideal", "max_loops": 12},
    "optimize": {
        "schedule": "ideal",
        "max_loops": 12,
        "variant": "map_error",
        "window": 4,
        "sink": 5,
        "restarts": 32,
        "max_iters": 4000,
        "xatol": 1e-9,
        "fatol": 1e-12,
    },
    "scaling": {
        "schedule": "ideal",
        "max_loops": 12,
        "m_max": 10,
        "exact_max": 6,
        "trials": 100_000,
        "columns": "both",
        "max_compositions": 2_000_000,
    },
    "montecarlo": {
        "schedule": "experimental",
        "max_loops": 12,
        "inputs": None,
        "noise": {},
        "duration": 60.0,
        "records": 10,
        "background_records": 10,
        "window_sigmas": 2.0,
        "k_values": [],
        "runs_per_k": 30,
        "mode": "averaged",
        "blind": False,
        "floor": None,
    },
    "states": {},
}

# montecarlo-only presets layered over a network preset
MC_PRESETS = {
    "quick": {"preset": "gu", "noise": {"pair_rate": 1000.0}, "duration": 10.0, "records": 1, "background_records": 0},
    "background-only": {
        "preset": "gu",
        "noise": {"pair_rate": 0.0, "accidental_rate_per_bin": 2.0},
        "duration": 50.0,
        "records": 4,
        "background_records": 20,
    },
}


class ConfigError(QSDError):
    pass


def _line_of(text: str, key: str) -> int | None:
    for n, line in enumerate(text.splitlines(), start=1):
        if re.search(rf'"{re.escape(key)}"\s*:', line):
            return n
    return None


def load_config(command: str, path: str | None, preset: str | None) -> dict:
    """Resolve defaults, preset and file into one config dict."""
    user: dict = {}
    text = ""
    where = path or "<config>"
    if path:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"{where}: cannot read config ({e.strerror})") from None
        try:
            user = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{where}:{e.lineno}:{e.colno}: {e.msg}") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{where}:1: config must be a JSON object")
    for key in user:
        if key not in ALLOWED[command]:
            line = _line_of(text, key)
            anchor = f"{where}:{line}" if line else where
            raise ConfigError(f"{anchor}: unknown key '{key}' for '{command}'")
    cfg = dict(DEFAULTS[command])
    name = preset or user.get("preset")
    if name is not None:
        if command == "montecarlo" and name in MC_PRESETS:
            cfg.update(MC_PRESETS[name])
            name = cfg["preset"]
        if name not in PRESETS:
            raise ConfigError(f"{where}: unknown preset '{name}'; choose from {sorted(PRESETS)}")
        cfg["preset"] = name
    cfg.update({k: v for k, v in user.items() if k != "preset"})
    cfg["_where"] = where
    cfg["_text"] = text
    return cfg


def _anchor(cfg: dict, key: str) -> str:
    line = _line_of(cfg.get("_text", ""), key)
    return f"{cfg['_where']}:{line}" if line else cfg["_where"]


def _build_ensemble(cfg: dict) -> Ensemble:
    try:
        if "states" in cfg:
            states = [PureState.from_dict(d) for d in cfg["states"]]
            priors = cfg.get("priors") or [1.0 / len(states)] * len(states)
            return Ensemble(tuple(states), tuple(priors), tuple(cfg.get("labels") or ()))
        name = cfg.get("ensemble") or (PRESETS[cfg["preset"]].ensemble if "preset" in cfg else None)
        if name is None:
            raise ConfigError(f"{cfg['_where']}: missing required key 'ensemble' (or 'preset')")
        ens = canonical_ensembles().get(name)
        if ens is None:
            raise ConfigError(f"{_anchor(cfg, 'ensemble')}: unknown ensemble '{name}'")
        if cfg.get("priors"):
            ens = Ensemble(ens.states, tuple(cfg["priors"]), ens.labels)
        return ens
    except (ValidationError, KeyError, TypeError) as e:
        raise ConfigError(f"{_anchor(cfg, 'states')}: invalid ensemble: {e}") from None


def _build_schedule(cfg: dict) -> ExtractionSchedule:
    s = cfg["schedule"]
    if isinstance(s, str):
        if s not in SCHEDULES:
            raise ConfigError(f"{_anchor(cfg, 'schedule')}: unknown schedule '{s}'; use ideal, experimental or an object")
        return SCHEDULES[s]
    try:
        return ExtractionSchedule(**s)
    except (TypeError, ValidationError) as e:
        raise ConfigError(f"{_anchor(cfg, 'schedule')}: invalid schedule: {e}") from None


def _build_network(cfg: dict) -> NetworkConfig:
    rec = cfg.get("receiver") or (PRESETS[cfg["preset"]].receiver if "preset" in cfg else None)
    if rec is None:
        raise ConfigError(f"{cfg['_where']}: missing required key 'receiver'")
    try:
        if isinstance(rec, str):
            uf, ub = named_receiver(rec)
        else:
            uf, ub = Unitary2.from_dict(rec["u_forward"]), Unitary2.from_dict(rec["u_backward"])
        return NetworkConfig(uf, ub, _build_schedule(cfg), cfg["max_loops"])
    except (KeyError, TypeError, ValidationError) as e:
        raise ConfigError(f"{_anchor(cfg, 'receiver')}: invalid receiver: {e}") from None


def _inputs(cfg: dict, ens: Ensemble) -> list[int]:
    if not cfg.get("inputs"):
        return list(range(len(ens)))
    try:
        return [ens.index(label) for label in cfg["inputs"]]
    except KeyError as e:
        raise ConfigError(f"{_anchor(cfg, 'inputs')}: {e.args[0]}") from None


def _public(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if not k.startswith("_")}


class Outputs:
    def __init__(self, out: Path):
        self.out = out
        self.files: list[str] = []

    def write(self, name: str, text: str) -> None:
        write_text(self.out / name, text)
        self.files.append(name)

    def finish(self, command: str, cfg: dict, seed: int, threads: int, summary: dict | None = None) -> None:
        meta = {
            "command": command,
            "version": __version__,
            "seed": seed,
            "threads": threads,
            "config": _public(cfg),
            "outputs": sorted(self.files),
        }
        if summary is not None:
            meta["summary"] = summary
        write_text(self.out / "metadata.json", dump_json(meta))


def cmd_simulate(cfg: dict, out: Outputs, seed: int, threads: int) -> dict:
    ens = _build_ensemble(cfg)
    net = _build_network(cfg)
    summary: dict = {}
    for i in _inputs(cfg, ens):
        label = ens.labels[i]
        d = evolve(net, ens.states[i])
        out.write(f"distribution_{label}.csv", distribution_to_csv(d))
        out.write(f"distribution_{label}.json", distribution_to_json(d))
        out.write(f"conditional_{label}.csv", sink_table_to_csv(conditional_distribution(d)))
        out.write(f"decay_free_{label}.csv", sink_table_to_csv(decay_free_distribution(d, net.schedule)))
    if len(ens) == 2:
        curve = cumulative_correct(net, ens, cfg["sink_map"])
        idx = conditional_distribution(evolve(net, ens.states[0])).bin_indices
        out.write("cumulative.csv", curve_to_csv(("bin_index", "p_right"), zip(idx, curve)))
        summary["helstrom_bound"] = helstrom_bound(ens.states[0], ens.states[1], *ens.priors)
        summary["final_p_right"] = curve[-1]
    return summary


def cmd_discriminate(cfg: dict, out: Outputs, seed: int, threads: int) -> dict:
    ens = _build_ensemble(cfg)
    table = outcome_table(_build_network(cfg), ens)
    rule = build_map_rule(table, ens.priors)
    out.write("outcome_table.csv", outcome_table_to_csv(table))
    rows = [(f"s{o[0]}_b{o[1]}", ens.labels[j]) for o, j in zip(table.outcomes, rule.assignment)]
    out.write("rule.csv", curve_to_csv(("outcome", "guess"), rows))
    summary = {"single_copy_error": single_copy_error(rule, table, ens.priors)}
    if len(ens) == 2:
        summary["helstrom_error"] = 1.0 - helstrom_bound(ens.states[0], ens.states[1], *ens.priors)
    return summary


def cmd_optimize(cfg: dict, out: Outputs, seed: int, threads: int) -> dict:
    ens = _build_ensemble(cfg)
    try:
        spec = ObjectiveSpec(cfg["variant"], cfg["window"], cfg["sink"], _build_schedule(cfg), cfg["max_loops"])
    except ValidationError as e:
        raise ConfigError(f"{cfg['_where']}: {e}") from None
    res = optimize(
        ens,
        spec,
        restarts=cfg["restarts"],
        max_iters=cfg["max_iters"],
        seed=seed,
        xatol=cfg["xatol"],
        fatol=cfg["fatol"],
        threads=threads,
    )
    out.write("receiver.json", dump_json(res.to_dict()))
    out.write("trace.csv", trace_to_csv(res.trace))
    return {"objective": res.objective, "status": res.status, "best_restart": res.best_restart}


def cmd_scaling(cfg: dict, out: Outputs, seed: int, threads: int) -> dict:
    ens = _build_ensemble(cfg)
    table = outcome_table(_build_network(cfg), ens)
    columns = cfg["columns"]
    if columns not in ("both", "exact", "montecarlo"):
        raise ConfigError(f"{_anchor(cfg, 'columns')}: columns must be both, exact or montecarlo")
    rows, ms, vals, errs = [], [], [], []
    for m in range(1, cfg["m_max"] + 1):
        exact = mc = None
        if columns == "exact" or (columns == "both" and m <= cfg["exact_max"]):
            exact = expected_multi_copy_error(table, ens.priors, m, "exact", max_compositions=cfg["max_compositions"])
        if columns == "montecarlo" or (columns == "both" and m > cfg["exact_max"]):
            mc = expected_multi_copy_error(
                table, ens.priors, m, "montecarlo", seed=derive_seed(seed, m), trials=cfg["trials"], threads=threads
            )
        rows.append((m, exact.value if exact else None, mc.value if mc else None, mc.stderr if mc else None))
        best = exact or mc
        ms.append(m)
        vals.append(best.value)
        errs.append(best.stderr)
    out.write("scaling.csv", curve_to_csv(("m", "exact", "montecarlo", "montecarlo_stderr"), rows))
    summary = {"errors": vals}
    if all(v > 0 for v in vals) and len(vals) > 1:
        slope, se = log_error_slope(ms, vals, errs)
        summary.update(log_slope=slope, log_slope_stderr=se)
    else:
        summary.update(log_slope=None, log_slope_stderr=None)
    return summary


def cmd_montecarlo(cfg: dict, out: Outputs, seed: int, threads: int) -> dict:
    ens = _build_ensemble(cfg)
    net = _build_network(cfg)
    try:
        noise = NoiseModel(**cfg["noise"])
    except (TypeError, ValidationError) as e:
        raise ConfigError(f"{_anchor(cfg, 'noise')}: invalid noise model: {e}") from None
    duration = float(cfg["duration"])
    inputs = _inputs(cfg, ens)
    tables = {i: conditional_distribution(evolve(net, ens.states[i])) for i in range(len(ens))}
    quiet = replace(noise, pair_rate=0.0)
    bkg_runs = [
        simulate_run(net, ens.states[0], quiet, duration, derive_seed(seed, 10_000, r), table=tables[0])
        for r in range(cfg["background_records"])
    ]
    background = estimate_background(bkg_runs) if bkg_runs else None
    expected_total = (noise.pair_rate + noise.accidental_rate_per_bin * tables[0].flat().size) * duration
    summary: dict = {"states": {}}
    raw_all, clean_all = [], []
    for i in inputs:
        label = ens.labels[i]
        raw = [
            simulate_run(net, ens.states[i], noise, duration, derive_seed(seed, i, r), label, tables[i])
            for r in range(cfg["records"])
        ]
        clean = [subtract_background(r, background) if background else replace(r, raw=False) for r in raw]
        raw_all += raw
        clean_all += clean
        pooled = np.sum([c.counts for c in clean], axis=0)
        info = {
            "records": len(raw),
            "raw_total": float(sum(r.total for r in raw)),
            "clean_total": float(pooled.sum()),
            "clamped_cells": int(sum(c.clamped for c in clean)),
        }
        if pooled.sum() > 0:
            info["tv_distance"] = total_variation(pooled, tables[i].flat())
        try:
            ps = postselect_k_photon(raw, expected_total, cfg["window_sigmas"])
            avg = subtract_background(ps.record, background) if background else ps.record
            out.write(f"postselected_{label}.csv", record_to_csv(avg))
            info.update(kept=ps.kept, discarded=ps.discarded)
        except NoEventsInWindowError as e:
            info["postselection"] = str(e)
        summary["states"][label] = info
    _write_records(out, raw_all, clean_all, bool(cfg["blind"]), seed)
    if cfg["k_values"]:
        curve = end_to_end_error_curve(
            net,
            ens,
            noise,
            cfg["k_values"],
            cfg["runs_per_k"],
            seed,
            cfg["window_sigmas"],
            cfg["mode"],
            max(cfg["background_records"], 1),
            floor=cfg["floor"],
        )
        out.write(
            "curve.csv",
            curve_to_csv(
                ("k", "m_mean", "p_err", "stderr", "kept", "discarded"),
                [(p.k, p.m_mean, p.p_err, p.stderr, p.kept, p.discarded) for p in curve],
            ),
        )
        summary["curve"] = [{"k": p.k, "p_err": p.p_err, "stderr": p.stderr} for p in curve]
    return summary


def _write_records(out: Outputs, raw, clean, blind: bool, seed: int) -> None:
    if not blind:
        counter: dict[str, int] = {}
        for r, c in zip(raw, clean):
            n = counter.get(r.state_label, 0)
            counter[r.state_label] = n + 1
            out.write(f"records/raw_{r.state_label}_{n:04d}.csv", record_to_csv(r))
            out.write(f"records/clean_{r.state_label}_{n:04d}.csv", record_to_csv(c))
        return
    order = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(20_000,))).permutation(len(raw))
    key_rows = []
    for n, j in enumerate(order):
        out.write(f"records/raw_{n:04d}.csv", record_to_csv(raw[j], hide_label=True))
        out.write(f"records/clean_{n:04d}.csv", record_to_csv(clean[j], hide_label=True))
        key_rows.append((f"{n:04d}", raw[j].state_label))
    out.write("key.csv", curve_to_csv(("record", "state_label"), key_rows))


def cmd_states(cfg: dict, out: Outputs, seed: int, threads: int) -> dict:
    if any(k in cfg for k in ("ensemble", "states", "preset")):
        ens = _build_ensemble(cfg)
        payload = {cfg.get("ensemble") or cfg.get("preset") or "custom": ens.to_dict()}
    else:
        payload = {name: e.to_dict() for name, e in canonical_ensembles().items()}
    out.write("states.json", dump_json(payload))
    print(dump_json(payload), end="")
    return {}


COMMANDS = {
    "simulate": cmd_simulate,
    "optimize": cmd_optimize,
    "discriminate": cmd_discriminate,
    "scaling": cmd_scaling,
    "montecarlo": cmd_montecarlo,
    "states": cmd_states,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config file")
    common.add_argument("--preset", help="named preset (binary, gu, tetrad, orthogonal; montecarlo also quick, background-only)")
    common.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, default=None, metavar="U64", help="master seed (default: config 'seed' or 0)")
    common.add_argument("--threads", type=int, default=1, metavar="N", help="worker threads (default: 1)")
    parser = argparse.ArgumentParser(prog="qsdnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qsdnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=fn.__name__.removeprefix("cmd_"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.command, args.config, args.preset)
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        if not 0 <= seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
        cfg["seed"] = seed
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        out = Outputs(Path(args.out))
        summary = COMMANDS[args.command](cfg, out, seed, args.threads)
        out.finish(args.command, cfg, seed, args.threads, summary)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except CapacityError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except QSDError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
