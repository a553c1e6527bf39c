"""Command-line interface.

Four commands: ``simulate`` integrates and writes a trajectory file,
``spectrum`` prints eigenvalue drift over a run, ``verify`` runs the named
identity battery, and ``gradient-check`` compares finite differences of the
objective against the closed-form directional derivative.

Runs are configured by a flat key=value file (``#`` starts a comment) with
every key also available as a flag; flags win.  Output is a deterministic
function of the configuration: same config and seed, byte-identical file.

Exit codes: 0 success, 2 configuration error, 3 integration failure,
4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import geometry, lattice, rng, verify
from .core import commutator
from .integrate import (
    IntegrationError,
    IntegratorConfig,
    TrajectoryRecord,
    format_invariant_summary,
    integrate,
    invariant_report,
)

__all__ = ["ConfigError", "RunConfig", "main", "run"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INTEGRATION = 3
EXIT_VERIFICATION = 4


class ConfigError(ValueError):
    """Bad or inconsistent run configuration."""


@dataclass(frozen=True)
class RunConfig:
    """Everything a simulate or spectrum run needs.

    Exactly one of ``u0`` (explicit sites) and ``seed`` (log-uniform draw)
    must be set; with ``seed`` the site count ``n`` is required.
    """

    n: int | None = None
    u0: tuple | None = None
    seed: int | None = None
    t0: float = 0.0
    t1: float = 1.0
    h0: float = 1e-3
    method: str = "rk4"
    form: str = "direct"
    sigma: int = lattice.CALIBRATED_SIGN
    tol_abs: float = 1e-10
    tol_rel: float = 1e-10
    record_every: int = 1
    guard_positivity: bool = True
    out: str | None = None
    format: str = "csv"
    spectra: bool = False

    def initial_state(self) -> lattice.LatticeState:
        if self.u0 is not None:
            return lattice.LatticeState(np.array(self.u0, dtype=float))
        stream = rng.SplitMix64(rng.substream_seed(self.seed, 0))
        return lattice.LatticeState(rng.random_state(self.n, stream))

    def integrator_config(self) -> IntegratorConfig:
        return IntegratorConfig(
            method=self.method,
            form=self.form,
            sigma=self.sigma,
            t0=self.t0,
            t1=self.t1,
            h0=self.h0,
            tol_abs=self.tol_abs,
            tol_rel=self.tol_rel,
            record_every=self.record_every,
            guard_positivity=self.guard_positivity,
        )


_BOOL_TOKENS = {
    "true": True, "1": True, "yes": True, "on": True,
    "false": False, "0": False, "no": False, "off": False,
}


def _parse_bool(text: str, key: str) -> bool:
    try:
        return _BOOL_TOKENS[text.strip().lower()]
    except KeyError:
        raise ConfigError(f"{key} expects a boolean, got {text!r}") from None


def _parse_floats(text: str, key: str) -> tuple:
    try:
        return tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise ConfigError(f"{key} expects comma-separated numbers, got {text!r}") from None


_RUN_KEY_PARSERS = {
    "n": lambda v: int(v),
    "u0": lambda v: _parse_floats(v, "u0"),
    "seed": lambda v: int(v),
    "t0": float,
    "t1": float,
    "h0": float,
    "method": str,
    "form": str,
    "sigma": lambda v: int(v),
    "tol_abs": float,
    "tol_rel": float,
    "record_every": lambda v: int(v),
    "guard_positivity": lambda v: _parse_bool(v, "guard_positivity"),
    "out": str,
    "format": str,
    "spectra": lambda v: _parse_bool(v, "spectra"),
}


def read_config_file(path: str) -> dict:
    """Parse a flat key=value file; ``#`` starts a comment, blank lines skip."""
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _RUN_KEY_PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _RUN_KEY_PARSERS[key](value)
        except ConfigError:
            raise
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return values


def build_run_config(ns: argparse.Namespace) -> RunConfig:
    """Merge defaults, the config file, and flags (flags win)."""
    merged = {}
    if ns.config is not None:
        merged.update(read_config_file(ns.config))
    for field in fields(RunConfig):
        flag_value = getattr(ns, field.name, None)
        if flag_value is not None:
            merged[field.name] = flag_value
    if "u0" in merged and merged["u0"] is not None:
        merged["u0"] = tuple(float(x) for x in merged["u0"])
    try:
        cfg = RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    _validate_run_config(cfg)
    return cfg


def _validate_run_config(cfg: RunConfig):
    if (cfg.u0 is None) == (cfg.seed is None):
        raise ConfigError("exactly one of u0 and seed must be given")
    if cfg.u0 is not None:
        if len(cfg.u0) < 1:
            raise ConfigError("u0 must list at least one site")
        if cfg.n is not None and cfg.n != len(cfg.u0):
            raise ConfigError(f"n = {cfg.n} does not match {len(cfg.u0)} sites in u0")
        if not all(np.isfinite(cfg.u0)) or min(cfg.u0) <= 0.0:
            raise ConfigError("u0 entries must be positive and finite")
    else:
        if cfg.n is None or cfg.n < 1:
            raise ConfigError("a seeded run needs n >= 1")
    if cfg.format not in ("csv", "jsonl"):
        raise ConfigError(f"format must be csv or jsonl, got {cfg.format!r}")
    try:
        cfg.integrator_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _format_value(x: float) -> str:
    return f"{x:.17g}"


def write_csv(path: str, record: TrajectoryRecord, spectra: bool):
    n = record.states.shape[1]
    dim = record.spectra.shape[1]
    header = ["t"] + [f"u_{i}" for i in range(1, n + 1)] + ["f"]
    if spectra:
        header += [f"lambda_{i}" for i in range(1, dim + 1)]
    lines = [",".join(header)]
    for i in range(record.n_samples):
        row = [record.times[i], *record.states[i], record.f_values[i]]
        if spectra:
            row.extend(record.spectra[i])
        lines.append(",".join(_format_value(x) for x in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_jsonl(path: str, record: TrajectoryRecord, spectra: bool):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i in range(record.n_samples):
            obj = {
                "t": record.times[i],
                "u": list(record.states[i]),
                "f": record.f_values[i],
            }
            if spectra:
                obj["lambda"] = list(record.spectra[i])
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def cmd_simulate(cfg: RunConfig, out_stream=None) -> int:
    out_stream = sys.stdout if out_stream is None else out_stream
    if cfg.out is None:
        raise ConfigError("simulate needs an output path (--out)")
    record = integrate(cfg.integrator_config(), cfg.initial_state())
    if cfg.format == "csv":
        write_csv(cfg.out, record, cfg.spectra)
    else:
        write_jsonl(cfg.out, record, cfg.spectra)
    summary = invariant_report(record)
    print(format_invariant_summary(summary, record), file=out_stream)
    print(f"wrote {record.n_samples} samples to {cfg.out}", file=out_stream)
    return EXIT_OK


def cmd_spectrum(cfg: RunConfig, out_stream=None) -> int:
    out_stream = sys.stdout if out_stream is None else out_stream
    record = integrate(cfg.integrator_config(), cfg.initial_state())
    first = record.spectra[0]
    last = record.spectra[-1]
    drift = np.abs(record.spectra - first).max(axis=0)
    mirror = first + first[::-1]
    print(
        f"{'i':>3}  {'lambda(t0)':>24}  {'lambda(t1)':>24}  {'drift':>10}  {'mirror':>10}",
        file=out_stream,
    )
    for i in range(first.size):
        print(
            f"{i + 1:>3}  {first[i]:>24.16g}  {last[i]:>24.16g}  "
            f"{drift[i]:>10.3e}  {abs(mirror[i]):>10.3e}",
            file=out_stream,
        )
    print(
        f"max drift = {drift.max():.3e}, max mirror defect = {np.abs(mirror).max():.3e}",
        file=out_stream,
    )
    return EXIT_OK


def cmd_verify(n_list, trials: int, seed: int, jobs: int = 1, out_stream=None) -> int:
    out_stream = sys.stdout if out_stream is None else out_stream
    report = verify.run_verification(n_list, trials, seed, jobs)
    name_w = max(len(c.name) for c in report.checks)
    print(f"{'check':<{name_w}}  {'residual':>10}  {'threshold':>10}  status", file=out_stream)
    for c in report.checks:
        status = "pass" if c.passed else "FAIL"
        print(
            f"{c.name:<{name_w}}  {c.residual:>10.3e}  {c.threshold:>10.0e}  {status}"
            + (f"  ({c.detail})" if c.detail else ""),
            file=out_stream,
        )
    print(
        f"sigma* = {report.sigma:+d}; trajectory discrepancy "
        f"{report.discrepancy[report.sigma]:.3e} (chosen) vs "
        f"{report.discrepancy[-report.sigma]:.3e} (rejected); "
        f"degenerate redraws = {report.redraws}",
        file=out_stream,
    )
    print("overall: " + ("PASS" if report.passed else "FAIL"), file=out_stream)
    return EXIT_OK if report.passed else EXIT_VERIFICATION


def cmd_gradient_check(
    n: int, trials: int, seed: int, eps_list, out_stream=None
) -> int:
    out_stream = sys.stdout if out_stream is None else out_stream
    eps_list = tuple(float(e) for e in eps_list)
    if not eps_list or not all(0.0 < e <= 1e-2 for e in eps_list):
        raise ConfigError("eps values must lie in (0, 1e-2]")
    if n < 1 or trials < 1:
        raise ConfigError("need n >= 1 and trials >= 1")
    slopes = []
    pairing_worst = 0.0
    print(
        f"{'trial':>5}  {'eps':>9}  {'fd':>23}  {'closed_form':>23}  {'|fd-closed|':>12}",
        file=out_stream,
    )
    for trial in range(trials):
        state = None
        for attempt in range(50):
            stream = rng.SplitMix64(rng.substream_seed(seed, 8, n, trial, attempt))
            candidate = lattice.LatticeState(rng.random_state(n, stream))
            try:
                ctx = geometry.orbit_context(lattice.lax_from_state(candidate))
            except geometry.DegenerateSpectrumError:
                continue
            state = candidate
            break
        if state is None:
            raise ConfigError("could not draw a state with a workable spectrum")
        # direction norm 10: keeps the eps^2 term of the centered difference
        # well above the double-precision floor of f at the smallest eps
        t = rng.skew_matrix(n + 1, stream)
        t = 10.0 * t / max(1e-30, float(np.linalg.norm(t)))
        dd = geometry.directional_derivative(ctx.base, t)
        grad = geometry.orbit_gradient(ctx)
        v = geometry.TangentVector(ctx.base, commutator(ctx.dense, t))
        nm = geometry.normal_metric(ctx, grad, v)
        pairing_worst = max(pairing_worst, abs(dd - nm) / (1.0 + abs(dd)))
        errs = []
        for eps in eps_list:
            fd = geometry.finite_difference_directional(ctx.base, t, eps)
            err = abs(fd - dd)
            errs.append(max(err, 1e-300))
            print(
                f"{trial:>5}  {eps:>9.1e}  {fd:>23.16g}  {dd:>23.16g}  {err:>12.3e}",
                file=out_stream,
            )
        if len(eps_list) >= 2:
            slope = np.polyfit(np.log(eps_list), np.log(errs), 1)[0]
            slopes.append(float(slope))
    mean_slope = float(np.mean(slopes)) if slopes else float("nan")
    print(
        f"mean convergence order = {mean_slope:.3f} (expect 2.0 +/- 0.2); "
        f"max |closed - metric| / (1 + |closed|) = {pairing_worst:.3e}",
        file=out_stream,
    )
    ok = (not slopes or abs(mean_slope - 2.0) <= 0.2) and pairing_worst <= 1e-11
    return EXIT_OK if ok else EXIT_VERIFICATION


def _add_run_flags(parser: argparse.ArgumentParser, with_output: bool):
    parser.add_argument("--config", help="key=value configuration file")
    parser.add_argument("--n", type=int, help="number of sites")
    parser.add_argument("--u0", type=lambda v: _parse_floats(v, "u0"),
                        help="comma-separated initial sites, e.g. 1,2,3")
    parser.add_argument("--seed", type=int, help="seed for log-uniform initial sites")
    parser.add_argument("--t0", type=float, help="start time (default 0)")
    parser.add_argument("--t1", type=float, help="end time (default 1)")
    parser.add_argument("--h0", type=float, help="step size, or initial step (default 1e-3)")
    parser.add_argument("--method", choices=("rk4", "adaptive45"), help="integration scheme")
    parser.add_argument("--form", choices=lattice.FORMS, help="right-hand-side form")
    parser.add_argument("--sigma", type=int, choices=(1, -1),
                        help="orientation of the matrix forms (default calibrated)")
    parser.add_argument("--tol-abs", dest="tol_abs", type=float, help="absolute tolerance")
    parser.add_argument("--tol-rel", dest="tol_rel", type=float, help="relative tolerance")
    parser.add_argument("--record-every", dest="record_every", type=int,
                        help="sampling stride in accepted steps (default 1)")
    parser.add_argument("--guard-positivity", dest="guard_positivity",
                        action=argparse.BooleanOptionalAction, default=None,
                        help="reject or abort on nonpositive sites (default on)")
    if with_output:
        parser.add_argument("--out", help="output file path")
        parser.add_argument("--format", choices=("csv", "jsonl"), help="output format")
        parser.add_argument("--spectra", action=argparse.BooleanOptionalAction,
                            default=None, help="include eigenvalue columns")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="volterra-lab",
        description="Volterra lattice laboratory: simulate, verify, inspect.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate and write a trajectory file")
    _add_run_flags(sim, with_output=True)

    spec = sub.add_parser("spectrum", help="integrate and print eigenvalue drift")
    _add_run_flags(spec, with_output=False)

    ver = sub.add_parser("verify", help="run the identity battery")
    ver.add_argument("--n-list", dest="n_list", default="1,2,3,5,8",
                     help="comma-separated site counts (default 1,2,3,5,8)")
    ver.add_argument("--trials", type=int, default=25, help="trials per site count")
    ver.add_argument("--seed", type=int, default=1, help="battery seed")
    ver.add_argument("--jobs", type=int, default=1,
                     help="worker processes for independent trials")

    gc = sub.add_parser("gradient-check",
                        help="finite-difference check of the directional derivative")
    gc.add_argument("--n", type=int, default=6, help="number of sites")
    gc.add_argument("--trials", type=int, default=5, help="independent trials")
    gc.add_argument("--seed", type=int, default=1, help="trial seed")
    gc.add_argument("--eps", default="1e-3,1e-4,1e-5",
                    help="comma-separated offsets (default 1e-3,1e-4,1e-5)")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    ns = parser.parse_args(argv)
    try:
        if ns.command == "simulate":
            return cmd_simulate(build_run_config(ns))
        if ns.command == "spectrum":
            return cmd_spectrum(build_run_config(ns))
        if ns.command == "verify":
            try:
                n_list = tuple(int(tok) for tok in ns.n_list.split(",") if tok.strip())
            except ValueError:
                raise ConfigError(f"bad n-list {ns.n_list!r}") from None
            if ns.jobs < 1:
                raise ConfigError("jobs must be >= 1")
            return cmd_verify(n_list, ns.trials, ns.seed, ns.jobs)
        if ns.command == "gradient-check":
            eps_list = _parse_floats(ns.eps, "eps")
            return cmd_gradient_check(ns.n, ns.trials, ns.seed, eps_list)
        raise ConfigError(f"unknown command {ns.command!r}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as exc:
        print(f"integration failure: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION


def run():
    sys.exit(main())
