"""Command-line front end: ``run``, ``compare`` and ``suite``.

Exit codes: 0 ok, 1 a suite criterion failed, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .contact import ThresholdParams
from .controller import ControllerGains
from .simworld import (Scenario, ScenarioError, Trace, load_scenario, run_scenario,
                       scenario_from_dict, summarize)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# window and reaction settings that ride along with the threshold parameters
CONTACT_KEYS = {"alpha": float, "lam": float, "window": int, "compliance": float}
ALIASES = {"lambda": "lam"}


class ConfigError(ValueError):
    pass


def _field_types() -> dict:
    types = {}
    for cls in (ControllerGains, ThresholdParams):
        for f in fields(cls):
            types[f.name] = int if f.type in (int, "int") else float
    types.update(CONTACT_KEYS)
    return types


def valid_keys() -> list[str]:
    return sorted(_field_types())


def parse_override(text: str) -> tuple[str, float | int]:
    """``"key=value"`` to a typed pair; unknown keys list the valid ones."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = (s.strip() for s in text.split("=", 1))
    key = ALIASES.get(key, key)
    types = _field_types()
    if key not in types:
        raise ConfigError(f"unknown parameter {key!r}; valid keys: {', '.join(valid_keys())}")
    try:
        return key, types[key](raw)
    except ValueError:
        raise ConfigError(f"parameter {key!r} expects {types[key].__name__}, got {raw!r}") from None


@dataclass
class RunConfig:
    scenario: str
    out: str = "out"
    seed: int | None = None
    proximity: bool = True
    restrictions: bool = True
    overrides: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        cfg = cls(**d)
        for k, v in cfg.overrides.items():
            parse_override(f"{k}={v}")
        return cfg

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    def run_kwargs(self) -> dict:
        """Keyword arguments for :func:`run_scenario` built from the overrides."""
        g = {k: v for k, v in self.overrides.items() if k in ControllerGains.keys()}
        t = {k: v for k, v in self.overrides.items() if k in ThresholdParams.keys()}
        gains = ControllerGains(**g)
        t.setdefault("d_max", gains.d_max)
        t.setdefault("d_min", gains.d_min)
        kw = {"gains": gains, "params": ThresholdParams(**t), "proximity": self.proximity,
              "restrictions": self.restrictions, "seed": self.seed}
        kw.update({k: v for k, v in self.overrides.items() if k in CONTACT_KEYS})
        return kw


def read_scenario(path) -> Scenario:
    """Load a scenario file or bundled name; JSON errors carry line and column."""
    p = Path(path)
    if not p.exists():
        return load_scenario(path)
    text = p.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(data)


def _format_summary(s: dict) -> str:
    return (f"peak |F| {s['peak_force']:.3f} N  peak |F_ext| {s['peak_F_ext']:.3f} N  "
            f"min obstacle distance {s['min_obstacle_distance']:.4f} m  contacts {s['contact_count']}")


# --- analysis used by the suite --------------------------------------------------


def spurious_contacts(trace: Trace, lookback: int = 5) -> int:
    """Detections with no true contact in the preceding ``lookback`` rows."""
    flags = np.flatnonzero(trace["contact_flag"] > 0)
    truth = trace["in_contact"] > 0
    return int(sum(not truth[max(0, k - lookback): k + 1].any() for k in flags))


def recovery_check(trace: Trace, l_max: int) -> dict:
    """Cycles from the last gated obstacle until the scale factor is 1 again."""
    seen = np.flatnonzero(trace["n_obstacles"] > 0)
    sf = trace["scale_factor"]
    if len(seen) == 0 or seen[-1] + l_max >= len(sf):
        return {"cycles": None, "exact": False}
    last = seen[-1]
    after = sf[last + 1:]
    cycles = int(np.argmax(after >= 1.0)) + 1 if np.any(after >= 1.0) else None
    exact = bool(np.all(sf[last + 1: last + l_max] < 1.0) and sf[last + l_max] == 1.0)
    return {"cycles": cycles, "exact": exact}


def reaction_check(trace: Trace) -> dict:
    """Per reaction episode: sign alignment, exact zero at the terminus, mode leaves ``reacting``."""
    R, E = trace.vector("reaction"), trace.vector("F_ext")
    mode = trace["mode"]
    flags = np.flatnonzero(trace["contact_flag"] > 0)
    aligned = all(np.all(np.sign(R[k]) == np.sign(E[k])) for k in flags)
    reacting = mode == "reacting"
    ends = [k for k in range(1, len(mode)) if reacting[k - 1] and not reacting[k]]
    zero = all(np.all(R[k - 1] == 0.0) for k in ends)
    resumed = all(np.any(mode[k:] == "nominal") for k in ends)
    # every episode must terminate inside the run
    complete = not reacting[-1]
    return {"detections": int(len(flags)), "episodes": len(ends), "sign_aligned": bool(aligned),
            "zero_at_terminus": bool(zero), "resumed": bool(resumed and complete)}


# --- commands ---------------------------------------------------------------------


def cmd_run(cfg: RunConfig) -> int:
    scenario = read_scenario(cfg.scenario)
    trace = run_scenario(scenario, **cfg.run_kwargs())
    csv_path, meta_path = trace.write(cfg.out)
    print(f"{scenario.name}: {_format_summary(summarize(trace))}")
    print(f"wrote {csv_path} and {meta_path}")
    return EXIT_OK


def cmd_compare(cfg: RunConfig) -> int:
    scenario = read_scenario(cfg.scenario)
    peaks = {}
    for label, prox in (("informed", True), ("uninformed", False)):
        trace = run_scenario(scenario, **{**cfg.run_kwargs(), "proximity": prox})
        trace.write(cfg.out, f"{scenario.name}_{label}")
        s = summarize(trace)
        peaks[label] = s["peak_force"]
        print(f"{label:>10}: {_format_summary(s)}")
    if peaks["informed"] > 0:
        print(f"force ratio uninformed/informed: {peaks['uninformed'] / peaks['informed']:.3f}")
    else:
        print("force ratio undefined: no contact detected with proximity informing")
    return EXIT_OK


@dataclass
class SuiteRow:
    name: str
    measured: str
    expected: str
    passed: bool


def run_suite(cfg: RunConfig, seeds: int = 10, echo=print) -> list[SuiteRow]:
    """Run every acceptance scenario, write their traces, return the result rows."""
    base_seed = 0 if cfg.seed is None else cfg.seed
    kw = cfg.run_kwargs()
    kw.pop("seed")
    kw.pop("proximity")
    out = Path(cfg.out)
    rows = []

    def run(name, tag, seed, **extra):
        t0 = time.perf_counter()
        trace = run_scenario(load_scenario(name), seed=seed, **{**kw, "proximity": True, **extra})
        trace.write(out, f"{name}_{tag}_s{seed}")
        return trace, time.perf_counter() - t0

    for name in ("static_wall_circle", "static_wall_line"):
        ratios, slowest = [], 0.0
        for seed in range(base_seed, base_seed + seeds):
            a, ta = run(name, "informed", seed)
            b, tb = run(name, "uninformed", seed, proximity=False)
            pa, pb = summarize(a)["peak_force"], summarize(b)["peak_force"]
            ratios.append(pa / pb if pb > 0 else np.inf)
            slowest = max(slowest, ta, tb)
        need = int(np.ceil(0.9 * seeds))
        ok = sum(r <= 0.6 for r in ratios)
        rows.append(SuiteRow(f"force ratio {name}", f"{ok}/{seeds} seeds <= 0.6 (max {max(ratios):.3f})",
                             f">= {need}/{seeds}", ok >= need))
        rows.append(SuiteRow(f"wall time {name}", f"{slowest:.2f} s", "< 10 s", slowest < 10.0))
        echo(f"  {name}: ratios {' '.join(f'{r:.3f}' for r in ratios)}")

    free, _ = run("circle", "informed", base_seed)
    err = float(free["path_error"][100:].max())
    rows.append(SuiteRow("circle tracking", f"{err * 1000:.2f} mm", "<= 5 mm after 1 s", err <= 0.005))

    on, _ = run("circle_avoid", "restricted", base_seed)
    off, _ = run("circle_avoid", "unrestricted", base_seed, restrictions=False)
    d_on, d_off = (float(t["min_obstacle_distance"].min()) for t in (on, off))
    rows.append(SuiteRow("avoidance", f"{d_on:.4f} m vs {d_off:.4f} m", "restricted > unrestricted", d_on > d_off))
    rec = recovery_check(on, kw["gains"].l_max)
    end_err = float(on["path_error"][-1])
    rows.append(SuiteRow("recovery", f"{rec['cycles']} cycles, end error {end_err * 1000:.2f} mm",
                         f"exactly {kw['gains'].l_max}, <= 5 mm",
                         rec["exact"] and rec["cycles"] == kw["gains"].l_max and end_err <= 0.005))

    dyn, _ = run("dynamic_collision", "informed", base_seed)
    rc = reaction_check(dyn)
    rows.append(SuiteRow("reaction", f"{rc['detections']} detections, {rc['episodes']} episodes",
                         "aligned, zero at terminus, resumes",
                         rc["detections"] > 0 and rc["sign_aligned"] and rc["zero_at_terminus"] and rc["resumed"]))
    spur = spurious_contacts(dyn)
    rows.append(SuiteRow("spurious contacts", str(spur), "0", spur == 0))
    return rows


def cmd_suite(cfg: RunConfig, seeds: int) -> int:
    rows = run_suite(cfg, seeds)
    width = max(len(r.name) for r in rows)
    print(f"{'criterion':<{width}}  result  measured / expected")
    for r in rows:
        print(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}    {r.measured} / {r.expected}")
    report = {"config": cfg.to_dict(), "seeds": seeds, "rows": [asdict(r) for r in rows]}
    Path(cfg.out, "suite_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if all(r.passed for r in rows) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proxcontact", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_scenario in (("run", True), ("compare", True), ("suite", False)):
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=needs_scenario, help="scenario JSON file or bundled name")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--no-proximity", dest="proximity", action="store_false")
        p.add_argument("--no-restrictions", dest="restrictions", action="store_false")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
        if name == "suite":
            p.add_argument("--seeds", type=int, default=10, help="seed sweep size for the force-ratio rows")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = dict(parse_override(s) for s in args.overrides)
        cfg = RunConfig(args.scenario or "", args.out, args.seed, args.proximity, args.restrictions, overrides)
        cfg.run_kwargs()  # validates parameter combinations
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "compare":
            return cmd_compare(cfg)
        if args.seeds < 1:
            raise ConfigError("--seeds must be at least 1")
        return cmd_suite(cfg, args.seeds)
    except (ConfigError, ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


__all__ = ["RunConfig", "main", "parse_override", "reaction_check", "recovery_check", "run_suite",
           "spurious_contacts", "valid_keys"]
