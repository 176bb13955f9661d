"""Batch entry points: ``verify``, ``simulate``, ``kappa`` and ``glue``.

Runs are described by an INI file with the sections below; every key is
optional and unknown sections or keys are rejected so that typos do not
silently fall back to defaults.

    [verify]   L, N, window, seed, random_fields
    [flow]     L, N, dt, t_end, scheme, renormalize, stride, dump_every,
               initial (bubble_noise | bubble | constant), mu, xi
    [noise]    epsilon, q          (epsilon = 0 switches the noise off;
                                    epsilon < 0 flips the profile's sign)
    [gluing]   t0, rho, sigma, alpha, dt, t_end, L_outer, N_outer,
               R_floor, quad_tol, proj_tol, cross_check
    [output]   dir

Exit codes: 0 ok, 1 checks failed, 2 config, 3 numeric, 4 sign condition,
5 consistency.
"""
from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .checks import SUITES, VerifySettings, run_checks
from .diagnostics import fit_decay_rate
from .errors import ConfigError, ConsistencyError, InvalidArgument, NumericError, SignConditionError
from .flow import SCHEMES, FlowConfig, run_flow, step, write_trajectory_csv
from .gluing import (
    GluingConfig,
    NoiseSpec,
    ParamState,
    glue_row,
    initial_state,
    inner_outer_step,
    kappa0,
    reconstruct,
    sign_functional,
    write_glue_csv,
)
from .grid import GridSpec, SphereMapField, make_grid, write_csv
from .profiles import BubbleParams, OMEGA_INF, scaled_bubble

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERIC, EXIT_SIGN, EXIT_CONSISTENCY = 0, 1, 2, 3, 4, 5
INITIAL_DATA = ("bubble_noise", "bubble", "constant")


@dataclass(frozen=True)
class FlowSection:
    L: float = 400.0
    N: int = 2**16
    dt: float | None = None
    t_end: float = 30.0
    scheme: str = "etd1"
    renormalize: bool = True
    stride: int | None = None
    dump_every: int = 0
    initial: str = "bubble_noise"
    mu: float = 1.0
    xi: float = 0.0

    @property
    def grid(self) -> GridSpec:
        return make_grid(self.L, self.N)

    def flow_config(self) -> FlowConfig:
        dt = self.dt if self.dt is not None else 0.25 * self.grid.h
        stride = self.stride if self.stride is not None else max(1, int(round(1.0 / dt)))
        return FlowConfig(dt, self.t_end, self.scheme, self.renormalize, stride, self.dump_every)


@dataclass(frozen=True)
class NoiseSection:
    epsilon: float = 0.1
    q: float = 0.0


@dataclass(frozen=True)
class GluingSection:
    t0: float = 10.0
    rho: float = 0.1
    sigma: float = 0.1
    alpha: float = 0.5
    dt: float = 0.05
    t_end: float = 10.5
    L_outer: float = 200.0
    N_outer: int = 2**13
    R_floor: float = 10.0
    quad_tol: float = 1e-9
    proj_tol: float = 1e-12
    cross_check: bool = False

    def gluing_config(self) -> GluingConfig:
        kw = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "cross_check"}
        return GluingConfig(**kw)


@dataclass(frozen=True)
class RunConfig:
    verify: VerifySettings = field(default_factory=VerifySettings)
    flow: FlowSection = field(default_factory=FlowSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    gluing: GluingSection = field(default_factory=GluingSection)
    out_dir: str = "out"

    def noise_spec(self) -> NoiseSpec | None:
        """The configured noise, or None when the amplitude is zero."""
        if self.noise.epsilon == 0:
            return None
        return NoiseSpec(self.noise.epsilon, self.noise.q)


_SECTIONS = {"verify": VerifySettings, "flow": FlowSection, "noise": NoiseSection, "gluing": GluingSection}


def _convert(raw: str, typ, where: str):
    text = raw.strip()
    try:
        if typ in (bool, "bool"):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if typ in (int, "int"):
            return int(text)
        if typ in (float, "float", "float | None"):
            if typ == "float | None" and text.lower() in ("", "none", "auto"):
                return None
            val = float(text)
            if not np.isfinite(val):
                raise ValueError(text)
            return val
        if typ == "int | None":
            return None if text.lower() in ("", "none", "auto") else int(text)
        return text
    except ValueError:
        raise ConfigError(f"{where}: cannot read {raw!r} as {typ}") from None


def load_config(path: str | None) -> RunConfig:
    """Parse and validate a run configuration; ``None`` gives all defaults."""
    if path is None:
        return RunConfig()
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case (L, N)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None

    built = {}
    for section in parser.sections():
        if section == "output":
            continue
        cls = _SECTIONS.get(section)
        if cls is None:
            raise ConfigError(f"unknown section [{section}]")
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for key, raw in parser.items(section):
            if key not in types:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            kw[key] = _convert(raw, types[key], f"[{section}] {key}")
        built[section] = kw
    out_dir = "out"
    if parser.has_section("output"):
        for key in parser.options("output"):
            if key != "dir":
                raise ConfigError(f"unknown key {key!r} in [output]")
        out_dir = parser.get("output", "dir", fallback="out").strip()
    try:
        cfg = RunConfig(
            verify=VerifySettings(**built.get("verify", {})),
            flow=FlowSection(**built.get("flow", {})),
            noise=NoiseSection(**built.get("noise", {})),
            gluing=GluingSection(**built.get("gluing", {})),
            out_dir=out_dir,
        )
        _validate(cfg)
    except InvalidArgument as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def _validate(cfg: RunConfig) -> None:
    v = cfg.verify
    make_grid(v.L, v.N)
    if v.random_fields < 1 or v.window <= 0:
        raise InvalidArgument("verify needs at least one random field and a positive window")
    f = cfg.flow
    if f.scheme not in SCHEMES:
        raise InvalidArgument(f"unknown scheme {f.scheme!r}; choose from {SCHEMES}")
    if f.initial not in INITIAL_DATA:
        raise InvalidArgument(f"unknown initial data {f.initial!r}; choose from {INITIAL_DATA}")
    BubbleParams(f.mu, f.xi)
    f.flow_config()
    cfg.gluing.gluing_config()


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _fmt(v) -> float | None:
    v = float(v)
    return float(format(v, ".17g")) if np.isfinite(v) else None


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _suite_worker(args):
    settings, suite = args
    return run_checks(settings, [suite])


def cmd_verify(config_path=None, suite_filter=None, out_dir=None, jobs: int = 1, stream=None) -> int:
    """Run the identity suites; write JSON lines; 0 iff every check passes."""
    stream = stream or sys.stdout
    try:
        cfg = load_config(config_path)
        chosen = list(SUITES)
        if suite_filter:
            wanted = [s.strip() for s in suite_filter.split(",") if s.strip()]
            unknown = [s for s in wanted if s not in SUITES]
            if unknown:
                raise ConfigError(f"unknown suite(s) {unknown}; choose from {list(SUITES)}")
            chosen = [s for s in SUITES if s in wanted]
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if jobs > 1 and len(chosen) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_suite_worker, [(cfg.verify, s) for s in chosen]))
        results = [r for part in parts for r in part]
    else:
        results = run_checks(cfg.verify, chosen)
    lines = [r.as_json() for r in results]
    for line in lines:
        print(line, file=stream)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "verify.jsonl"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


def initial_datum(cfg: RunConfig) -> SphereMapField:
    f = cfg.flow
    g = f.grid
    x = g.x
    if f.initial == "constant":
        return SphereMapField.from_array(g, np.repeat(OMEGA_INF[:, None], g.N, axis=1))
    u = scaled_bubble(BubbleParams(f.mu, f.xi), x)
    if f.initial == "bubble_noise":
        noise = cfg.noise_spec()
        if noise is not None:
            u = u + noise.initial(x)
    return SphereMapField.from_array(g, u, renormalize=True)


def cmd_simulate(config_path=None, out_dir=None, stream=None) -> int:
    """Run the flow; write trajectory CSV and summary JSON."""
    stream = stream or sys.stdout
    try:
        cfg = load_config(config_path)
        u0 = initial_datum(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SignConditionError as exc:
        print(f"sign condition: {exc}", file=sys.stderr)
        return EXIT_SIGN
    out = out_dir or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    fc = cfg.flow.flow_config()
    dump = os.path.join(out, "fields") if fc.dump_every else None
    traj = run_flow(u0, fc, dump_dir=dump, keep_states=False)
    write_trajectory_csv(os.path.join(out, "trajectory.csv"), traj)

    mu = traj.column("mu")
    times = np.asarray(traj.times)
    ok = np.isfinite(mu) & (mu > 0)
    rate = r2 = None
    if np.count_nonzero(ok) >= 10:
        rate, r2 = fit_decay_rate(times[ok], mu[ok])
    summary = {
        "final_energy": _fmt(traj.diagnostics[-1].energy),
        "kappa_fit": None if rate is None else _fmt(rate),
        "r_squared": None if r2 is None else _fmt(r2),
        "mu_strictly_decreasing": bool(ok.all() and np.all(np.diff(mu) < 0)),
        "samples": len(traj.times),
        "t_final": _fmt(times[-1]),
        "error": traj.error,
    }
    noise = cfg.noise_spec()
    if noise is not None and cfg.flow.initial == "bubble_noise":
        summary["kappa0"] = _fmt(kappa0(noise))
    _write_json(os.path.join(out, "summary.json"), summary)
    print(json.dumps(summary, sort_keys=True), file=stream)
    if traj.error is not None:
        print(f"numeric error: {traj.error}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_kappa(config_path=None, stream=None) -> int:
    """Print kappa0 and the sign functional of the configured noise."""
    stream = stream or sys.stdout
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    eps, q = cfg.noise.epsilon, cfg.noise.q
    if eps == 0:
        print("sign functional = 0.0000000000", file=stream)
        print("sign condition: zero noise gives a vanishing functional", file=sys.stderr)
        return EXIT_SIGN
    try:
        noise = NoiseSpec(eps, q)
    except SignConditionError as exc:
        print(f"sign condition: {exc}", file=sys.stderr)
        return EXIT_SIGN
    print(f"sign functional = {sign_functional(noise.profile2, q):.10f}", file=stream)
    print(f"kappa0 = {kappa0(noise):.10f}", file=stream)
    return EXIT_OK


def _dump_glue_state(path: str, st) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# t={st.t!r} tau={st.tau!r} lambda={st.lam!r} xi1={st.xi1!r}\n")
        fh.write("grid,coord,value1,value2\n")
        for yv, vv in zip(st.inner.x, st.v):
            fh.write(f"inner,{yv:.17g},{vv:.17g},0\n")
        for xv, p1, p2 in zip(st.outer.x, st.psi[0], st.psi[1]):
            fh.write(f"outer,{xv:.17g},{p1:.17g},{p2:.17g}\n")


def cmd_glue(config_path=None, out_dir=None, cross_check: bool | None = None, stream=None) -> int:
    """Advance the inner-outer system; write the gluing CSV."""
    stream = stream or sys.stdout
    try:
        cfg = load_config(config_path)
        gc = cfg.gluing.gluing_config()
        noise = cfg.noise_spec()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SignConditionError as exc:
        print(f"sign condition: {exc}", file=sys.stderr)
        return EXIT_SIGN
    ps = ParamState(0.0 if noise is None else kappa0(noise), cfg.noise.q)
    out = out_dir or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    check = cfg.gluing.cross_check if cross_check is None else cross_check

    st = initial_state(gc, ps)
    first = st
    rows = [glue_row(st)]
    n = int(round((gc.t_end - gc.t0) / gc.dt))
    code = EXIT_OK
    summary = {"steps": n, "kappa0": _fmt(ps.kappa0), "R": _fmt(gc.R)}
    try:
        for _ in range(n):
            st, diag = inner_outer_step(st, gc, ps, noise)
            rows.append(glue_row(st))
    except ConsistencyError as exc:
        print(f"consistency error: {exc}", file=sys.stderr)
        _dump_glue_state(os.path.join(out, "glue_last_state.csv"), st)
        summary["error"] = str(exc)
        code = EXIT_CONSISTENCY
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        _dump_glue_state(os.path.join(out, "glue_last_state.csv"), st)
        summary["error"] = str(exc)
        code = EXIT_NUMERIC
    write_glue_csv(os.path.join(out, "glue.csv"), rows)

    if check and code == EXIT_OK:
        # evolve the reconstructed map with the flow over the same horizon
        u_start = reconstruct(first, gc, ps, noise)
        fc = FlowConfig(gc.dt, gc.t_end - gc.t0, scheme="etd1")
        u = u_start
        for _ in range(n):
            u = step(u, fc)
        u_end = reconstruct(st, gc, ps, noise)
        summary["cross_check_sup_difference"] = _fmt(np.max(np.abs(u.u - u_end.u)))
        write_csv(os.path.join(out, "glue_reconstruction.csv"), u_end)
    _write_json(os.path.join(out, "glue_summary.json"), summary)
    print(json.dumps(summary, sort_keys=True), file=stream)
    return code


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration (defaults when omitted)")
    common.add_argument("--out", help="output directory (overrides [output] dir)")
    common.add_argument("--filter", help="comma-separated suites for verify")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for independent suites")
    p = argparse.ArgumentParser(prog="halfflow", description="Half-harmonic map flow toolkit.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("verify", parents=[common], help="run the identity suites")
    sub.add_parser("simulate", parents=[common], help="run the constrained flow")
    sub.add_parser("kappa", parents=[common], help="print kappa0 for the configured noise")
    g = sub.add_parser("glue", parents=[common], help="run the inner-outer evolution")
    g.add_argument("--cross-check", action="store_true", default=None, help="compare with the flow over the same horizon")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("config error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "verify":
        return cmd_verify(args.config, args.filter, args.out, args.jobs)
    if args.command == "simulate":
        return cmd_simulate(args.config, args.out)
    if args.command == "kappa":
        return cmd_kappa(args.config)
    return cmd_glue(args.config, args.out, args.cross_check)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
