"""Command-line experiment runner.

Every experiment family gets a subcommand; parameters come from flags, a
TOML/JSON config file, or built-in defaults, with flags winning over the
file. Results land in a CSV plus a JSON mirror, both embedding the
effective config. Progress chatter goes to stderr; stdout carries only
the summary lines and output path. Exit codes: 0 success, 1 validation
failure (bad input or a failed check), 2 runtime abort (window edge,
event cap, convergence failure).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import tomli

from . import exact, reporting
from .coupling import (
    DEFAULT_ORIGIN_PULL,
    collision_occupation_scaling,
    discrepancy_scaling,
    z_chain_scaling,
)
from .dynamics import (
    simulate_boundary_driven,
    simulate_dual_absorbing,
    simulate_irw,
    simulate_sip,
)
from .hydro import HydroExperiment, MacroProfile, heat_solve_discrete, lep_check
from .lattice import LabeledPositions, OccupationConfig, ring, segment
from .measures import (
    ReservoirParams,
    detailed_balance_max_relerr,
    moment_identity_lhs,
    scale_ratio,
)
from .nes import (
    coupled_absorption_check,
    factorization_check,
    nes_profile_direct,
    nes_profile_dual,
)
from .rngs import RngStream, resolve_seed

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_ABORT = 2

REQUIRED = object()

PROFILE_FAMILIES = {
    "constant": ("value",),
    "smoothed_step": ("left", "right", "center", "width"),
    "gaussian_bump": ("base", "amplitude", "center", "width"),
}


class CliError(Exception):
    """Anything wrong with the invocation itself (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


@dataclass(frozen=True)
class Field:
    name: str
    kind: str
    default: object = REQUIRED
    help: str = ""
    choices: tuple | None = None


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _parse_list(text: str, conv):
    parts = [p for p in str(text).replace(";", ",").split(",") if p.strip()]
    if not parts:
        raise CliError(f"empty list value {text!r}")
    return tuple(conv(p.strip()) for p in parts)


def _canonical_profile(value) -> dict:
    """Normalize a profile description to {family, params: [floats]}."""
    if isinstance(value, str):
        family, _, rest = value.partition(":")
        family = family.strip()
        params = list(_parse_list(rest, float)) if rest.strip() else []
    elif isinstance(value, dict):
        try:
            family = value["family"]
        except KeyError:
            raise CliError("profile needs a 'family' key") from None
        raw = value.get("params", [])
        if isinstance(raw, dict):
            names = PROFILE_FAMILIES.get(family)
            if names is None:
                raise CliError(f"unknown profile family {family!r}")
            unknown = set(raw) - set(names)
            if unknown:
                raise CliError(
                    f"unknown profile parameter(s) {sorted(unknown)} for {family}"
                )
            params = []
            for nm in names:
                if nm in raw:
                    params.append(float(raw[nm]))
                elif nm == "center":
                    params.append(0.5)
                elif nm == "width":
                    params.append(0.1)
                else:
                    raise CliError(f"profile parameter {nm!r} is required")
        else:
            params = [float(x) for x in raw]
    else:
        raise CliError(f"cannot read a profile from {value!r}")
    if family not in PROFILE_FAMILIES:
        raise CliError(f"unknown profile family {family!r}")
    # Positional forms may omit the trailing center/width defaults.
    names = PROFILE_FAMILIES[family]
    if len(params) == len(names) - 2 and names[-2:] == ("center", "width"):
        params.extend([0.5, 0.1])
    elif len(params) == len(names) - 1 and names[-1] == "width":
        params.append(0.1)
    return {"family": family, "params": params}


def _build_profile(spec: dict) -> MacroProfile:
    try:
        return MacroProfile(spec["family"], tuple(spec["params"]))
    except ValueError as e:
        raise CliError(str(e)) from None


def _coerce(field: Field, value, source: str):
    try:
        if field.kind == "int":
            out = int(value)
        elif field.kind == "float":
            out = float(value)
        elif field.kind == "str":
            out = str(value)
        elif field.kind == "int_list":
            out = _parse_list(value, int) if isinstance(value, str) else tuple(
                int(v) for v in value
            )
        elif field.kind == "float_list":
            out = _parse_list(value, float) if isinstance(value, str) else tuple(
                float(v) for v in value
            )
        elif field.kind == "profile":
            out = _canonical_profile(value)
        else:  # pragma: no cover - registry bug
            raise CliError(f"unhandled field kind {field.kind}")
    except (TypeError, ValueError) as e:
        raise CliError(f"bad value for {field.name} (from {source}): {e}") from None
    if field.choices is not None and out not in field.choices:
        raise CliError(
            f"{field.name} must be one of {', '.join(map(str, field.choices))}; "
            f"got {out!r}"
        )
    return out


def _load_config_file(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise CliError(f"config file {path} does not exist")
    text = p.read_text()
    if p.suffix.lower() == ".toml":
        try:
            return tomli.loads(text)
        except tomli.TOMLDecodeError as e:
            raise CliError(f"malformed TOML in {path}: {e}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise CliError(
            f"malformed JSON in {path}: line {e.lineno} column {e.colno}: {e.msg}"
        ) from None
    if not isinstance(data, dict):
        raise CliError(f"config root in {path} must be a table/object")
    # A result-file mirror is accepted directly: reuse its embedded config.
    if "config" in data and "version" in data and isinstance(data["config"], dict):
        return data["config"]
    return data


def _effective(cmd: str, fields: tuple[Field, ...], args) -> dict:
    allowed = {f.name for f in fields}
    merged = {f.name: f.default for f in fields}
    if args.config is not None:
        conf = _load_config_file(args.config)
        extra = set(conf) - allowed - {"command"}
        if extra:
            raise CliError(
                f"unknown config key(s) for {cmd}: {', '.join(sorted(extra))}"
            )
        if "command" in conf and conf["command"] != cmd:
            raise CliError(
                f"config file is for '{conf['command']}', not '{cmd}'"
            )
        by_name = {f.name: f for f in fields}
        for key, val in conf.items():
            if key == "command":
                continue
            merged[key] = _coerce(by_name[key], val, f"config key {key}")
    for f in fields:
        cli_val = getattr(args, f.name, None)
        if cli_val is not None:
            merged[f.name] = _coerce(f, cli_val, f"flag --{f.name.replace('_', '-')}")
    missing = [k for k, v in merged.items() if v is REQUIRED]
    if missing:
        raise CliError(
            f"missing required key(s) for {cmd}: {', '.join(sorted(missing))}"
        )
    return merged


def _resolve_reservoir(eff: dict, m: float) -> ReservoirParams:
    greek = [eff.get(k) for k in ("alpha", "gamma", "sigma", "beta")]
    given = [v is not None for v in greek]
    if any(given):
        if not all(given):
            raise CliError("give all four of alpha/gamma/sigma/beta or none")
        return ReservoirParams(*greek)
    return ReservoirParams.canonical(eff["rho_l"], eff["rho_r"], m)


def _parse_occupation_init(text: str, sites, interior_only: bool) -> OccupationConfig:
    counts = {}
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        site_s, _, count_s = part.partition(":")
        if not count_s:
            raise CliError(
                f"occupation init needs site:count entries; got {part!r}"
            )
        site, count = int(site_s), int(count_s)
        counts[site] = counts.get(site, 0) + count
    lo = sites.interior_lo if interior_only else sites.lo
    hi = sites.interior_hi if interior_only else sites.hi
    for s in counts:
        if not lo <= s <= hi:
            raise CliError(f"init site {s} outside {lo}..{hi}")
    return OccupationConfig(sites, counts)


def _summarize(rows, columns) -> None:
    for row in rows:
        print("  ".join(f"{c}={reporting.format_cell(v)}" for c, v in zip(columns, row)))


def _write(eff: dict, cmd: str, columns, rows, threads: int, t0: float,
           summarize: bool = True) -> None:
    config = {"command": cmd}
    for k, v in eff.items():
        if v is None:
            continue
        config[k] = list(v) if isinstance(v, tuple) else v
    path = reporting.write_report(
        eff["out"], columns, rows, config,
        wallclock_s=time.perf_counter() - t0, threads=threads,
    )
    if summarize:
        _summarize(rows, columns)
    print(f"wrote {path} and {path.with_suffix('.json')}")


_RESERVOIR_FIELDS = (
    Field("rho_l", "float", 1.0, "left boundary density (canonical rates)"),
    Field("rho_r", "float", 2.0, "right boundary density (canonical rates)"),
    Field("alpha", "float", None, "left birth coefficient (overrides rho-l/rho-r)"),
    Field("gamma", "float", None, "left death coefficient"),
    Field("sigma", "float", None, "right birth coefficient"),
    Field("beta", "float", None, "right death coefficient"),
)


# ---------------------------------------------------------------- commands


def _run_check_duality(eff: dict, threads: int) -> int:
    m = eff["m"]
    tol = eff["tol"]
    if (eff["ring"] is None) == (eff["segment"] is None):
        raise CliError("give exactly one of --ring or --segment")
    if eff["ring"] is not None:
        residual = exact.max_intertwining_residual(
            eff["ring"], eff["max_dual"], eff["max_occ"], m
        )
        label = f"ring {eff['ring']}"
    else:
        res = _resolve_reservoir(eff, m)
        residual = exact.max_boundary_intertwining_residual(
            eff["segment"], eff["max_dual"], eff["max_occ"], res, m
        )
        label = f"segment {eff['segment']}"
    ok = residual <= tol
    print(
        f"duality {label}: max residual {residual:.3e} "
        f"(tol {tol:.1e}) {'PASS' if ok else 'FAIL'}"
    )
    return EXIT_OK if ok else EXIT_INVALID


def _run_check_balance(eff: dict, threads: int) -> int:
    worst_balance = 0.0
    for m in eff["m_list"]:
        for lam in eff["lam_list"]:
            err = detailed_balance_max_relerr(
                lam, m, max_n=eff["max_n"], max_k=eff["max_k"]
            )
            worst_balance = max(worst_balance, err)
    worst_moment = 0.0
    for m in eff["m_list"]:
        for lam in eff["lam_list"]:
            if lam > 0.8:
                continue
            for k in range(eff["max_moment"] + 1):
                err = abs(moment_identity_lhs(k, lam, m) - scale_ratio(lam) ** k)
                worst_moment = max(worst_moment, err)
    ok = worst_balance <= eff["tol_balance"] and worst_moment <= eff["tol_moment"]
    print(
        f"detailed balance: max rel err {worst_balance:.3e} "
        f"(tol {eff['tol_balance']:.1e})"
    )
    print(
        f"moment identity: max abs err {worst_moment:.3e} "
        f"(tol {eff['tol_moment']:.1e})"
    )
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_INVALID


def _run_simulate(eff: dict, threads: int) -> int:
    t0 = time.perf_counter()
    model = eff["model"]
    m = eff["m"]
    gen = RngStream(eff["seed"]).generator()
    record = eff["out"] is not None
    if model == "sip-ring":
        init = _parse_occupation_init(eff["init"], ring(eff["ring"]), False)
        traj = simulate_sip(init, m, eff["t_max"], gen, record=record)
        final = dict(sorted(traj.final.counts.items()))
        summary = f"final occupation {final}"
        events = traj.events
    elif model == "boundary":
        sites = segment(eff["n_sites"])
        init = _parse_occupation_init(eff["init"], sites, True)
        res = _resolve_reservoir(eff, m)
        traj = simulate_boundary_driven(init, res, m, eff["t_max"], gen,
                                        record=record)
        final = dict(sorted(traj.final.counts.items()))
        summary = f"final occupation {final}"
        events = traj.events
    elif model in ("sip-window", "irw"):
        init = LabeledPositions(_parse_list(eff["init"], int))
        run = simulate_sip if model == "sip-window" else simulate_irw
        traj = run(init, m, eff["t_max"], gen, record=record)
        summary = f"final positions {traj.final.positions}"
        events = traj.events
    elif model == "dual":
        init = LabeledPositions(_parse_list(eff["init"], int))
        res = None
        if any(eff.get(k) is not None for k in ("alpha", "gamma", "sigma", "beta")):
            res = _resolve_reservoir(eff, m)
        result = simulate_dual_absorbing(
            init, eff["n_sites"], m, gen, res=res, record=record
        )
        summary = (
            f"absorbed at t={result.absorption_time:.6g} "
            f"final positions {result.final}"
        )
        events = result.trajectory.events if result.trajectory else ()
    else:  # pragma: no cover - argparse choices guard
        raise CliError(f"unknown model {model!r}")
    print(f"{model}: {summary} ({len(events)} events recorded)")
    if eff["out"] is not None:
        columns = ("time", "kind", "from", "to", "label")
        rows = [
            (ev.time, ev.kind.value, ev.src, ev.dst,
             "" if ev.label is None else ev.label)
            for ev in events
        ]
        _write(eff, "simulate", columns, rows, threads, t0, summarize=False)
    return EXIT_OK


def _run_coupling_scaling(eff: dict, threads: int) -> int:
    t0 = time.perf_counter()
    start = LabeledPositions(eff["start"])
    stream = RngStream(eff["seed"])
    columns = ("T", "replicas", "mean", "stderr")
    rows = []
    if eff["observable"] == "discrepancy":
        _progress(f"discrepancy scaling over T={list(eff['t_list'])}")
        data = discrepancy_scaling(
            start, eff["m"], eff["t_list"], eff["replicas"], stream,
            threads=threads,
        )
        rows = [(T, eff["replicas"], est.mean, est.stderr) for T, est in data]
    else:
        _progress(f"collision occupation scaling over T={list(eff['t_list'])}")
        data = collision_occupation_scaling(
            start, eff["m"], eff["t_list"], eff["replicas"], stream,
            threads=threads,
        )
        pick = 1 if eff["observable"] == "delta-occupation" else 2
        rows = [(row[0], eff["replicas"], row[pick].mean, row[pick].stderr)
                for row in data]
    _write(eff, "coupling-scaling", columns, rows, threads, t0)
    return EXIT_OK


def _run_z_chain(eff: dict, threads: int) -> int:
    t0 = time.perf_counter()
    stream = RngStream(eff["seed"])
    _progress(f"z-chain scaling over T={list(eff['t_list'])}")
    data = z_chain_scaling(
        eff["m"], eff["t_list"], eff["replicas"], stream,
        origin_pull=eff["origin_pull"], z0=eff["z0"], threads=threads,
    )
    pick = 1 if eff["observable"] == "occupation" else 2
    columns = ("T", "replicas", "mean", "stderr")
    rows = [(row[0], eff["replicas"], row[pick].mean, row[pick].stderr)
            for row in data]
    _write(eff, "z-chain", columns, rows, threads, t0)
    return EXIT_OK


def _run_hydro_lep(eff: dict, threads: int) -> int:
    t0 = time.perf_counter()
    if eff["model"] != "sip":
        raise CliError(f"unknown model {eff['model']!r}; only 'sip' is available")
    pi = _build_profile(eff["profile"])
    stream = RngStream(eff["seed"])
    columns = ("N", "y", "estimate", "stderr", "pde_value")
    rows = []
    for N in eff["n_list"]:
        exp = HydroExperiment(
            pi=pi, m=eff["m"], N=N, t=eff["t"], points=eff["points"],
            replicas=eff["replicas"],
        )
        _progress(f"N={N}: {eff['replicas']} replicas up to time {N * N * eff['t']:g}")
        for r in lep_check(exp, stream.split(N), threads=threads):
            rows.append(
                (r.N, ";".join(repr(y) for y in r.ys), r.estimate, r.stderr,
                 r.pde_value)
            )
    _write(eff, "hydro-lep", columns, rows, threads, t0)
    return EXIT_OK


def _run_nes_profile(eff: dict, threads: int) -> int:
    t0 = time.perf_counter()
    N = eff["n_sites"]
    m = eff["m"]
    stream = RngStream(eff["seed"])
    h = exact.absorption_solve_single(N, m)
    exact_profile = eff["rho_l"] + (eff["rho_r"] - eff["rho_l"]) * h
    if eff["mode"] == "dual":
        _progress(f"dual profile: {eff['replicas']} replicas per site, {N} sites")
        ests = nes_profile_dual(
            N, eff["rho_l"], eff["rho_r"], m, eff["replicas"], stream,
            threads=threads,
        )
    else:
        _progress(
            f"direct stationary profile: burn {eff['t_burn'] or 10 * N * N:g}, "
            f"average {eff['t_avg'] or 20 * N * N:g} time units"
        )
        ests = nes_profile_direct(
            N, eff["rho_l"], eff["rho_r"], m, stream,
            t_burn=eff["t_burn"], t_avg=eff["t_avg"], batches=eff["batches"],
        )
    columns = ("N", "sites", "estimate", "stderr", "exact_value")
    rows = [
        (N, i + 1, est.mean, est.stderr, float(exact_profile[i + 1]))
        for i, est in enumerate(ests)
    ]
    _write(eff, "nes-profile", columns, rows, threads, t0)
    return EXIT_OK


def _exact_factor_gaps(points, N: int, m: float) -> dict[tuple[str, ...], float]:
    start = tuple(math.floor(x * N) for x in points)
    law = exact.labeled_dual_absorption_solve(start, N, m)
    n = len(start)
    gaps = {}
    for code in range(2**n):
        pat = tuple((code >> (n - 1 - i)) & 1 for i in range(n))
        target = tuple(N + 1 if a else 0 for a in pat)
        joint = sum(p for fin, p in law.items() if fin == target)
        prod = 1.0
        for i, want in enumerate(target):
            prod *= sum(p for fin, p in law.items() if fin[i] == want)
        gaps[tuple("R" if a else "L" for a in pat)] = joint - prod
    return gaps


def _run_nes_factorization(eff: dict, threads: int) -> int:
    t0 = time.perf_counter()
    stream = RngStream(eff["seed"])
    columns = ("N", "sites", "pattern", "estimate", "stderr", "exact_value")
    rows = []
    for N in eff["n_list"]:
        sites = tuple(math.floor(x * N) for x in eff["points"])
        label = ";".join(str(s) for s in sites)
        if eff["check"] == "factorization":
            _progress(f"N={N}: factorization with {eff['replicas']} replicas")
            exact_gaps = _exact_factor_gaps(eff["points"], N, eff["m"])
            for row in factorization_check(
                eff["points"], N, eff["m"], eff["replicas"], stream.split(N),
                threads=threads,
            ):
                rows.append(
                    (N, label, "".join(row.pattern), row.gap, row.gap_se,
                     exact_gaps[row.pattern])
                )
        else:
            _progress(f"N={N}: coupled absorption with {eff['replicas']} replicas")
            est = coupled_absorption_check(
                eff["points"], N, eff["m"], eff["replicas"], stream.split(N),
                threads=threads,
            )
            rows.append((N, label, "discrepancy", est.mean, est.stderr, ""))
    _write(eff, "nes-factorization", columns, rows, threads, t0)
    return EXIT_OK


def _run_oracle(eff: dict, threads: int) -> int:
    what = eff["what"]
    m = eff["m"]
    out: dict
    if what == "duality-poly":
        from .measures import duality_poly

        out = {"value": duality_poly(eff["k"], eff["n"], m)}
    elif what == "moment-identity":
        out = {
            "series": moment_identity_lhs(eff["k"], eff["lam"], m),
            "closed_form": scale_ratio(eff["lam"]) ** eff["k"],
        }
    elif what == "stationary-ring":
        Q, idx = exact.build_generator(
            "sip_ring", n_sites=eff["ring"], n_particles=eff["n_particles"], m=m
        )
        if idx.size > 20000:
            raise CliError("state space too large to print")
        pi = exact.stationary_solve(Q)
        out = {
            ",".join(map(str, idx.config(i))): float(pi[i])
            for i in range(idx.size)
        }
    elif what == "absorption-single":
        res = None
        if any(eff.get(k) is not None for k in ("alpha", "gamma", "sigma", "beta")):
            res = _resolve_reservoir(eff, m)
        h = exact.absorption_solve_single(eff["n_sites"], m, res=res)
        out = {"right_absorption": [float(v) for v in h]}
    elif what == "dual-absorption":
        law = exact.dual_absorption_solve(eff["sites"], eff["n_sites"], m)
        out = {f"{k},{l}": p for (k, l), p in sorted(law.items())}
    elif what == "labeled-absorption":
        law = exact.labeled_dual_absorption_solve(eff["sites"], eff["n_sites"], m)
        out = {",".join(map(str, fin)): p for fin, p in sorted(law.items())}
    elif what == "boundary-profile":
        res = _resolve_reservoir(eff, m)
        profile, cap = exact.boundary_stationary_profile(eff["n_sites"], res, m)
        out = {
            "profile": [float(v) for v in profile],
            "occupancy_cap": cap,
        }
    elif what == "heat-delta":
        vals = heat_solve_discrete({0: 1.0}, m, eff["t"], sites=[eff["site"]])
        out = {"value": vals[eff["site"]]}
    else:  # pragma: no cover - argparse choices guard
        raise CliError(f"unknown oracle {what!r}")
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "check-duality": (
        (
            Field("ring", "int", None, "ring size for the closed-system check"),
            Field("segment", "int", None, "interior sites for the boundary check"),
            Field("max_dual", "int", 2, "max total dual particles"),
            Field("max_occ", "int", 3, "max occupation per site"),
            Field("m", "float", 2.0, "inclusion parameter"),
            Field("tol", "float", 1e-10, "residual tolerance"),
        )
        + _RESERVOIR_FIELDS,
        _run_check_duality,
    ),
    "check-balance": (
        (
            Field("m_list", "float_list", (0.5, 1.0, 2.0, 4.0), "m values"),
            Field("lam_list", "float_list",
                  (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9), "scales"),
            Field("max_n", "int", 30, "max donor occupation"),
            Field("max_k", "int", 30, "max receiver occupation"),
            Field("max_moment", "int", 4, "max dual-moment order"),
            Field("tol_balance", "float", 1e-12, "detailed-balance rel tolerance"),
            Field("tol_moment", "float", 1e-8, "moment-identity abs tolerance"),
        ),
        _run_check_balance,
    ),
    "simulate": (
        (
            Field("model", "str", REQUIRED,
                  "one of sip-ring, sip-window, irw, boundary, dual",
                  choices=("sip-ring", "sip-window", "irw", "boundary", "dual")),
            Field("init", "str", REQUIRED,
                  "site:count list for occupation models, position list otherwise"),
            Field("m", "float", 2.0, "inclusion parameter"),
            Field("t_max", "float", 1.0, "horizon (ignored by the dual)"),
            Field("ring", "int", 5, "ring size for sip-ring"),
            Field("n_sites", "int", 10, "interior sites for boundary/dual"),
            Field("seed", "int", None, "RNG seed"),
            Field("out", "str", None, "event-log CSV path"),
        )
        + _RESERVOIR_FIELDS,
        _run_simulate,
    ),
    "coupling-scaling": (
        (
            Field("observable", "str", "discrepancy",
                  "discrepancy, delta-occupation, or nonbinary-occupation",
                  choices=("discrepancy", "delta-occupation",
                           "nonbinary-occupation")),
            Field("start", "int_list", REQUIRED, "shared initial positions"),
            Field("m", "float", 1.0, "inclusion parameter"),
            Field("t_list", "float_list", (64.0, 512.0, 4096.0), "horizons"),
            Field("replicas", "int", 10000, "replicas per horizon"),
            Field("seed", "int", None, "RNG seed"),
            Field("out", "str", "coupling_scaling.csv", "output CSV path"),
        ),
        _run_coupling_scaling,
    ),
    "z-chain": (
        (
            Field("observable", "str", "occupation",
                  "occupation (time at |z|=1) or additive (A(T)^2/T)",
                  choices=("occupation", "additive")),
            Field("m", "float", 1.0, "base jump rate"),
            Field("t_list", "float_list", (100.0, 1000.0, 10000.0), "horizons"),
            Field("replicas", "int", 10000, "replicas per horizon"),
            Field("origin_pull", "float", DEFAULT_ORIGIN_PULL,
                  "extra rate from +-1 into 0"),
            Field("z0", "int", 0, "initial state"),
            Field("seed", "int", None, "RNG seed"),
            Field("out", "str", "z_chain.csv", "output CSV path"),
        ),
        _run_z_chain,
    ),
    "hydro-lep": (
        (
            Field("model", "str", "sip", "process family", choices=("sip",)),
            Field("m", "float", REQUIRED, "inclusion parameter"),
            Field("profile", "profile", REQUIRED,
                  "macro profile, e.g. smoothed_step:0.2,0.6,0.5,0.1"),
            Field("n_list", "int_list", REQUIRED, "scales N"),
            Field("t", "float", REQUIRED, "macroscopic time"),
            Field("points", "float_list", REQUIRED, "macro observation points"),
            Field("replicas", "int", 10000, "replicas per scale"),
            Field("seed", "int", None, "RNG seed"),
            Field("out", "str", "hydro_lep.csv", "output CSV path"),
        ),
        _run_hydro_lep,
    ),
    "nes-profile": (
        (
            Field("mode", "str", "dual", "dual or direct",
                  choices=("dual", "direct")),
            Field("n_sites", "int", REQUIRED, "interior segment length"),
            Field("rho_l", "float", REQUIRED, "left boundary density"),
            Field("rho_r", "float", REQUIRED, "right boundary density"),
            Field("m", "float", 2.0, "inclusion parameter"),
            Field("replicas", "int", 10000, "dual replicas per site"),
            Field("t_burn", "float", None, "burn-in time (default 10 N^2)"),
            Field("t_avg", "float", None, "averaging time (default 20 N^2)"),
            Field("batches", "int", 20, "batch count for the direct mode"),
            Field("seed", "int", None, "RNG seed"),
            Field("out", "str", "nes_profile.csv", "output CSV path"),
        ),
        _run_nes_profile,
    ),
    "nes-factorization": (
        (
            Field("check", "str", "factorization",
                  "factorization or coupled-absorption",
                  choices=("factorization", "coupled-absorption")),
            Field("points", "float_list", (0.3, 0.7), "macro start points"),
            Field("n_list", "int_list", (10, 20, 40), "segment lengths"),
            Field("m", "float", 2.0, "inclusion parameter"),
            Field("replicas", "int", 10000, "replicas per length"),
            Field("seed", "int", None, "RNG seed"),
            Field("out", "str", "nes_factorization.csv", "output CSV path"),
        ),
        _run_nes_factorization,
    ),
    "oracle": (
        (
            Field("what", "str", REQUIRED, "which exact quantity to print",
                  choices=("duality-poly", "moment-identity", "stationary-ring",
                           "absorption-single", "dual-absorption",
                           "labeled-absorption", "boundary-profile",
                           "heat-delta")),
            Field("m", "float", 2.0, "inclusion parameter"),
            Field("k", "int", 1, "dual-moment order"),
            Field("n", "int", 1, "occupation value"),
            Field("lam", "float", 0.5, "scale parameter"),
            Field("ring", "int", 3, "ring size"),
            Field("n_particles", "int", 2, "particles on the ring"),
            Field("n_sites", "int", 10, "interior segment length"),
            Field("sites", "int_list", (3, 7), "dual start sites"),
            Field("t", "float", 1.0, "time"),
            Field("site", "int", 0, "displacement for heat-delta"),
        )
        + _RESERVOIR_FIELDS,
        _run_oracle,
    ),
}


COMMAND_HELP = {
    "check-duality": "exhaustive generator-level duality residual",
    "check-balance": "detailed-balance and moment-identity checks",
    "simulate": "one trajectory with optional event-log CSV",
    "coupling-scaling": "coupled-process observables across horizons",
    "z-chain": "difference-walk occupation and additive functional",
    "hydro-lep": "local-equilibrium check against the heat equation",
    "nes-profile": "steady-state density profile, dual or direct",
    "nes-factorization": "absorption factorization and coupled check",
    "oracle": "print exact small-system quantities as JSON",
}


def build_parser() -> _Parser:
    parser = _Parser(prog="sipsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name, (fields, _) in COMMANDS.items():
        p = sub.add_parser(name, help=COMMAND_HELP[name],
                           description=COMMAND_HELP[name])
        p.add_argument("--config", default=None,
                       help="TOML or JSON config file (flags override it)")
        p.add_argument("--threads", type=int, default=1,
                       help="parallel replica workers (default 1)")
        for f in fields:
            p.add_argument(
                f"--{f.name.replace('_', '-')}", dest=f.name, default=None,
                metavar=f.kind.upper(), help=f.help,
            )
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise CliError("a subcommand is required (see --help)")
        fields, runner = COMMANDS[args.command]
        eff = _effective(args.command, fields, args)
        if "seed" in eff:
            eff["seed"] = resolve_seed(eff["seed"])
        threads = int(args.threads)
        if threads < 1:
            raise CliError("--threads must be at least 1")
        return runner(eff, threads)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, TypeError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except RuntimeError as e:
        print(f"aborted: {e}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
