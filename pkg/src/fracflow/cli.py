"""Command-line entry point: validated JSON configs in, CSV/JSON artifacts and a manifest out."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .diffusion import GridTooSmall, UnderResolved, sample_shape, u_grid
from .geometry import Ball, GeometryDomainError, fractional_mean_curvature, shape_from_dict
from .kernels import (
    Family,
    KernelDomainError,
    explicit_half_constant,
    gamma_limit_constant,
    make_kernel,
    verify_kernel_bounds,
)
from .mbo import deviation_from_fractional_ode, deviation_from_mcf, run_flow
from .scaling import Branch, ScalingDomainError, ScalingLaw
from .velocity import LadderJob, RECORD_FIELDS, default_ladder, expansion_constants, velocity_table

log = logging.getLogger("fracflow")

KINDS = ("kernel-check", "scaling", "constants", "diffuse", "velocity", "mbo")
EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2
BOUNDS_RADII = (0.0, 0.1, 1.0, 10.0, 100.0)


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass
class ExperimentConfig:
    """Resolved experiment description; every field is written to the manifest."""

    kind: str
    families: list = field(default_factory=list)
    s: list = field(default_factory=list)
    dim: int = 2
    shapes: list = field(default_factory=list)
    ladder: list | None = None
    h: float | None = None
    n_steps: int | None = None
    n_grid: int = 1024
    extent: float | None = None
    mode: str = "periodic"
    sigma: float | None = None
    tol: dict = field(default_factory=dict)
    limit_t: float = 1e-4
    limit_tol: float = 0.01
    flow_tol: float | None = None
    snapshot_every: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def _line_of(text: str | None, key: str) -> int | None:
    if not text:
        return None
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def _float_list(value, name: str, line) -> list:
    vals = value if isinstance(value, list) else [value]
    try:
        return [float(v) for v in vals]
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number or list of numbers", line) from None


def parse_config(raw: dict, text: str | None = None) -> ExperimentConfig:
    """Validate a config mapping and fill regime-specific defaults.

    Parameters
    ----------
    raw : dict
        Decoded JSON.
    text : str, optional
        Source text, used to attach line numbers to messages.
    """
    at = lambda key: _line_of(text, key)
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object", 1)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)} | {"family", "shape"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown field {key!r}", at(key))
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; expected one of {', '.join(KINDS)}", at("kind"))
    s_list = _float_list(raw.get("s", []), "s", at("s"))
    for s in s_list:
        if not 0.0 < s < 1.0:
            raise ConfigError(f"s must lie in (0, 1), got {s}", at("s"))
    fams = raw.get("families", raw.get("family", []))
    fams = fams if isinstance(fams, list) else [fams]
    if fams == ["all"]:
        fams = [f.value for f in Family]
    try:
        fams = [Family.parse(f).value for f in fams]
    except (ValueError, KernelDomainError) as exc:
        raise ConfigError(str(exc), at("families") or at("family")) from None
    dim = raw.get("dim", 2)
    if not isinstance(dim, int) or dim < 2:
        raise ConfigError("dim must be an integer >= 2", at("dim"))
    shapes = raw.get("shapes", [raw["shape"]] if "shape" in raw else [])
    if not isinstance(shapes, list):
        raise ConfigError("shapes must be a list of shape objects", at("shapes"))
    for sh in shapes:
        try:
            shape_from_dict({k: v for k, v in sh.items() if k not in ("id", "points")})
        except (GeometryDomainError, AttributeError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad shape: {exc}", at("shapes") or at("shape")) from None
    tol = raw.get("tol", {})
    if not isinstance(tol, dict):
        raise ConfigError("tol must be an object", at("tol"))
    bad = set(tol) - {"u", "hs", "wrap"}
    if bad:
        raise ConfigError(f"unknown tolerance(s) {sorted(bad)}", at("tol"))
    cfg = ExperimentConfig(kind=kind, families=fams, s=s_list, dim=dim, shapes=shapes, tol=dict(tol))
    if "ladder" in raw:
        cfg.ladder = _float_list(raw["ladder"], "ladder", at("ladder"))
        if any(t <= 0 for t in cfg.ladder):
            raise ConfigError("ladder times must be positive", at("ladder"))
    for name, cast in (("h", float), ("n_steps", int), ("n_grid", int), ("extent", float), ("sigma", float),
                       ("limit_t", float), ("limit_tol", float), ("flow_tol", float),
                       ("snapshot_every", int)):
        if name in raw and raw[name] is not None:
            try:
                setattr(cfg, name, cast(raw[name]))
            except (TypeError, ValueError):
                raise ConfigError(f"{name} must be {cast.__name__}", at(name)) from None
    if "mode" in raw:
        cfg.mode = raw["mode"]
    if cfg.mode not in ("periodic", "free"):
        raise ConfigError(f"mode must be 'periodic' or 'free', got {cfg.mode!r}", at("mode"))
    if cfg.n_grid < 8 or cfg.n_grid & (cfg.n_grid - 1):
        raise ConfigError("n_grid must be a power of two >= 8", at("n_grid"))
    _regime_defaults(cfg, at)
    return cfg


def _regime_defaults(cfg: ExperimentConfig, at) -> None:
    kind = cfg.kind
    if not cfg.s:
        cfg.s = [0.25, 0.5, 0.75] if kind in ("kernel-check", "scaling", "constants") else []
        if not cfg.s:
            raise ConfigError(f"{kind} needs at least one value of s", at("kind"))
    if not cfg.families and kind != "scaling":
        cfg.families = [f.value for f in Family]
    if kind in ("diffuse", "mbo"):
        if len(cfg.s) != 1 or len(cfg.families) != 1:
            raise ConfigError(f"{kind} takes exactly one s and one family", at("s"))
        if len(cfg.shapes) != 1:
            raise ConfigError(f"{kind} takes exactly one shape", at("shape") or at("shapes"))
    if kind == "diffuse" and cfg.sigma is None:
        raise ConfigError("diffuse needs sigma", at("kind"))
    if kind == "mbo":
        if cfg.h is None or cfg.n_steps is None:
            raise ConfigError("mbo needs h and n_steps", at("kind"))
        if cfg.n_steps < 0 or cfg.h <= 0:
            raise ConfigError("mbo needs h > 0 and n_steps >= 0", at("h"))
    if kind == "velocity":
        if not cfg.shapes:
            cfg.shapes = [{"kind": "ball", "radius": 1.0, "id": "ball", "points": [0.0]}]
        if "hs" in cfg.tol and all(s >= 0.5 for s in cfg.s):
            raise ConfigError("tol.hs only applies to s < 1/2", at("hs") or at("tol"))
        if any(s < 0.5 for s in cfg.s):
            cfg.tol.setdefault("hs", 1e-8)
    if "wrap" not in cfg.tol and kind in ("diffuse", "mbo"):
        cfg.tol["wrap"] = 1e-3
    # drop families that do not exist at the requested orders
    if kind != "scaling":
        pairs = [(f, s) for f in cfg.families for s in cfg.s if f != Family.EXPLICIT_HALF.value or s == 0.5]
        if not pairs:
            raise ConfigError("the explicit-half family needs s = 0.5", at("families") or at("family"))


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    return parse_config(raw, text)


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------


@dataclass
class RunContext:
    out: Path
    cache: str | None
    workers: int | None
    tables: dict = field(default_factory=dict)

    def kernel(self, family: str, s: float, dim: int):
        k = make_kernel(family, s, dim, cache_dir=self.cache)
        if k.table is not None:
            self.tables[f"{k.tag}:s={s:g}:N={dim}"] = k.table.checksum()
        return k

    def write_csv(self, name: str, header, rows) -> None:
        with open(self.out / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])

    def write_json(self, name: str, obj) -> None:
        (self.out / name).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _fmt(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        v = v.item()
    if isinstance(v, float):
        return repr(v)
    return v


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (Branch, Family)):
        return v.value
    raise TypeError(f"not serialisable: {type(v)}")


def _pairs(cfg: ExperimentConfig):
    for fam in cfg.families:
        for s in cfg.s:
            if fam == Family.EXPLICIT_HALF.value and s != 0.5:
                continue
            yield fam, s


def limit_sup_error(kernel, t: float, radii=None) -> float:
    """sup over |y| in [1/2, 2] of |t^{-1} K(y,t) |y|^{N+2s} / C - 1|."""
    r = np.linspace(0.5, 2.0, 61) if radii is None else np.asarray(radii, dtype=float)
    q = kernel.radial(r, t) / t * r ** (kernel.dim + 2 * kernel.s) / kernel.limit_constant
    return float(np.max(np.abs(q - 1.0)))


def run_kernel_check(cfg: ExperimentConfig, ctx: RunContext) -> dict:
    rows, criteria = [], {}
    for fam, s in _pairs(cfg):
        k = ctx.kernel(fam, s, cfg.dim)
        rep = verify_kernel_bounds(k, BOUNDS_RADII)
        err = limit_sup_error(k, cfg.limit_t)
        mass = k.table.mass() if k.table is not None else math.nan
        rows.append((fam, s, cfg.dim, k.limit_constant, rep.c_lower, rep.c_upper, rep.constant, rep.passed,
                     err, err <= cfg.limit_tol, mass))
        criteria[f"bounds:{fam}:s={s:g}"] = rep.passed
        criteria[f"limit:{fam}:s={s:g}"] = err <= cfg.limit_tol
        if not math.isnan(mass):
            criteria[f"mass:{fam}:s={s:g}"] = abs(mass - 1.0) <= 1e-6
    if 0.5 in cfg.s and cfg.dim == 2:
        exact = 1.0 / (2 * math.pi)
        criteria["C_2,1/2:gamma"] = abs(gamma_limit_constant(2, 0.5) - exact) <= 1e-6
        criteria["C_2,1/2:explicit"] = abs(explicit_half_constant(2) - exact) <= 1e-6
    ctx.write_csv("kernel_check.csv", ("family", "s", "dim", "limit_constant", "c_lower", "c_upper",
                                       "bound_constant", "bounds_pass", "limit_sup_error", "limit_pass",
                                       "mass"), rows)
    return criteria


def run_scaling(cfg: ExperimentConfig, ctx: RunContext) -> dict:
    rows, criteria = [], {}
    for s in cfg.s:
        law = ScalingLaw(s)
        ts = cfg.ladder or default_ladder(s)
        worst = 0.0
        for t in ts:
            sig = law(t)
            back = law.inverse(sig)
            worst = max(worst, abs(back - t) / t)
            rows.append((s, law.branch.value, t, sig, back))
        criteria[f"round-trip:s={s:g}"] = worst <= 1e-12
    ctx.write_csv("scaling.csv", ("s", "branch", "t", "sigma", "t_roundtrip"), rows)
    return criteria


def run_constants(cfg: ExperimentConfig, ctx: RunContext) -> dict:
    rows, criteria = [], {}
    for fam, s in _pairs(cfg):
        k = ctx.kernel(fam, s, cfg.dim)
        c = expansion_constants(k)
        b = Branch.of(s)
        coef = c.a if b is Branch.SUB_HALF else c.c if b is Branch.SUPER_HALF else c.b_limit
        name = {Branch.SUB_HALF: "a", Branch.SUPER_HALF: "c", Branch.HALF: "b_limit"}[b]
        rows.append((fam, s, cfg.dim, c.limit_constant, c.I0, c.I2, name, coef))
        criteria[f"finite:{fam}:s={s:g}"] = bool(np.isfinite(coef) and coef > 0)
    ctx.write_csv("constants.csv", ("family", "s", "dim", "limit_constant", "I0", "I2", "coefficient",
                                    "value"), rows)
    return criteria


def run_diffuse(cfg: ExperimentConfig, ctx: RunContext) -> dict:
    fam, s = cfg.families[0], cfg.s[0]
    k = ctx.kernel(fam, s, cfg.dim)
    spec = cfg.shapes[0]
    shape = shape_from_dict({k_: v for k_, v in spec.items() if k_ not in ("id", "points")})
    f = sample_shape(shape, cfg.n_grid, cfg.extent)
    u = u_grid(f, k, cfg.sigma, cfg.mode, cfg.tol.get("wrap"), ctx.workers)
    u.save(ctx.out / "field.txt")
    (ctx.out / "slice.csv").write_text(u.csv_slice())
    ctx.write_json("diffuse.json", {"meta": u.meta, "extent": u.extent, "n": u.n,
                                    "u_min": float(u.values.min()), "u_max": float(u.values.max())})
    return {"range": bool(np.max(np.abs(u.values)) <= 1.0 + 1e-9)}


def _shape_points(spec: dict, shape):
    params = spec.get("points", [None])
    pts = []
    for j, prm in enumerate(params):
        label = f"p{j}" if prm is None else f"p{j}:{prm}"
        pts.append(shape.boundary_point(prm, label=label))
    return pts


def run_velocity(cfg: ExperimentConfig, ctx: RunContext) -> dict:
    jobs = []
    for fam, s in _pairs(cfg):
        k = ctx.kernel(fam, s, cfg.dim)
        for i, spec in enumerate(cfg.shapes):
            shape = shape_from_dict({k_: v for k_, v in spec.items() if k_ not in ("id", "points")})
            sid = spec.get("id", f"{shape.kind}{i}")
            pts = _shape_points(spec, shape)
            curv = {}
            if s < 0.5:
                curv = {p.label: fractional_mean_curvature(shape, p, s, cfg.tol["hs"]) for p in pts}
            jobs.append(LadderJob(shape, sid, pts, k, cfg.ladder or default_ladder(s), curv))
    records, summaries = velocity_table(jobs, cfg.tol.get("u"))
    ctx.write_csv("records.csv", RECORD_FIELDS + ("error",),
                  [tuple(r.as_row().values()) + (r.error,) for r in records])
    ctx.write_json("summary.json", [sm.to_dict() for sm in summaries])
    return {f"ladder:{sm.family}:s={sm.s:g}:{sm.shape}:{sm.point}": sm.passed for sm in summaries}


def run_mbo(cfg: ExperimentConfig, ctx: RunContext) -> dict:
    fam, s = cfg.families[0], cfg.s[0]
    k = ctx.kernel(fam, s, cfg.dim)
    law = ScalingLaw(s)
    spec = cfg.shapes[0]
    shape = shape_from_dict({k_: v for k_, v in spec.items() if k_ not in ("id", "points")})
    trace = run_flow(shape, k, law, cfg.h, cfg.n_steps, n_grid=cfg.n_grid, extent=cfg.extent, mode=cfg.mode,
                     wrap_tol=cfg.tol.get("wrap", 1e-3), snapshot_every=cfg.snapshot_every,
                     workers=ctx.workers)
    (ctx.out / "trace.csv").write_text(trace.to_csv())
    for n, fld in sorted(trace.snapshots.items()):
        fld.save(ctx.out / f"field_{n:05d}.txt")
    summary = trace.summary()
    criteria = {"radius-positive": bool(np.all(trace.radii[trace.areas > 0] > 0))}
    centred_ball = isinstance(shape, Ball) and np.allclose(shape.center, 0.0) and cfg.dim == 2
    if centred_ball and len(trace.steps) > 1:
        consts = expansion_constants(k)
        if s > 0.5:
            dev = deviation_from_mcf(trace, consts.c, 0.5 * shape.radius)
            tol = cfg.flow_tol if cfg.flow_tol is not None else 0.05
            criteria["flow-law"] = dev <= tol
            summary.update(flow_deviation=dev, flow_tol=tol, reference="R^2 = R0^2 - 2 c t")
        elif s < 0.5:
            unit = Ball(1.0)
            hs1 = fractional_mean_curvature(unit, unit.boundary_point(0.0), s, cfg.tol.get("hs", 1e-8))
            dev = deviation_from_fractional_ode(trace, consts.a, hs1, 0.5 * shape.radius, shape.radius)
            tol = cfg.flow_tol if cfg.flow_tol is not None else 0.10
            criteria["flow-law"] = dev <= tol
            summary.update(flow_deviation=dev, flow_tol=tol, reference="RK4 of R' = -a |H_s(B_1)| R^(-2s)")
    ctx.write_json("trace_summary.json", summary)
    return criteria


RUNNERS = {
    "kernel-check": run_kernel_check,
    "scaling": run_scaling,
    "constants": run_constants,
    "diffuse": run_diffuse,
    "velocity": run_velocity,
    "mbo": run_mbo,
}


def run(cfg: ExperimentConfig, out: str | os.PathLike, cache: str | None = None,
        threads: int = 0) -> int:
    """Run one experiment and write its manifest; returns the exit status."""
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from None
    workers = (os.cpu_count() or 1) if threads == 0 else threads
    ctx = RunContext(out, cache, workers)
    error = ""
    try:
        criteria = RUNNERS[cfg.kind](cfg, ctx)
    except (GridTooSmall, UnderResolved, ScalingDomainError, KernelDomainError, GeometryDomainError) as exc:
        criteria, error = {}, f"{type(exc).__name__}: {exc}"
    passed = bool(criteria) and all(criteria.values()) and not error
    manifest = {
        "fracflow_version": __version__,
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "output_dir": str(out),
        "kernel_cache": cache,
        "kernel_tables": dict(sorted(ctx.tables.items())),
        "criteria": {k: bool(v) for k, v in sorted(criteria.items())},
        "passed": passed,
        "error": error,
        "threads": threads,
    }
    ctx.write_json("manifest.json", manifest)
    for name, ok in sorted(criteria.items()):
        log.info("%s %s", "PASS" if ok else "FAIL", name)
    if error:
        log.error(error)
    return EXIT_OK if passed else EXIT_NUMERICAL


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="JSON experiment config")
    p.add_argument("--out", default=d("fracflow-out"), help="output directory")
    p.add_argument("--kernel-cache", default=d(None), help="kernel table cache (default: $FRACFLOW_CACHE)")
    p.add_argument("--threads", type=int, default=d(0), help="FFT workers, 0 = all cores")
    p.add_argument("-v", "--verbose", action="count", default=d(0))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracflow", description=__doc__)
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command")
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        _global_flags(p, suppress=True)
        p.add_argument("--s", type=float, nargs="+", help="fractional order(s)")
        p.add_argument("--family", nargs="+", help="kernel family tag(s), or 'all'")
        p.add_argument("--dim", type=int)
        if kind in ("diffuse", "velocity", "mbo"):
            p.add_argument("--shape", help="shape descriptor as inline JSON")
        if kind in ("diffuse", "mbo"):
            p.add_argument("--grid", type=int, help="points per axis")
            p.add_argument("--mode", choices=("periodic", "free"))
            p.add_argument("--extent", type=float, help="periodic box side")
        if kind == "diffuse":
            p.add_argument("--sigma", type=float)
        if kind in ("velocity", "scaling"):
            p.add_argument("--ladder", type=float, nargs="+", help="times t")
        if kind == "mbo":
            p.add_argument("--h", type=float, help="time step")
            p.add_argument("--n-steps", type=int)
            p.add_argument("--snapshot-every", type=int)
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    out = {}
    table = {"s": "s", "family": "families", "dim": "dim", "grid": "n_grid", "mode": "mode", "extent": "extent",
             "sigma": "sigma", "ladder": "ladder", "h": "h", "n_steps": "n_steps",
             "snapshot_every": "snapshot_every"}
    for arg, key in table.items():
        v = getattr(args, arg, None)
        if v is not None:
            out[key] = v
    if getattr(args, "shape", None):
        try:
            out["shapes"] = [json.loads(args.shape)]
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--shape is not valid JSON: {exc.msg}") from None
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else
                        logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            text = Path(args.config).read_text()
            try:
                raw = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno) from None
        else:
            text, raw = None, {}
        if args.command:
            if "kind" in raw and raw["kind"] != args.command:
                raise ConfigError(f"config kind {raw['kind']!r} does not match subcommand {args.command!r}",
                                  _line_of(text, "kind"))
            raw["kind"] = args.command
        elif not raw:
            parser.print_usage(sys.stderr)
            raise ConfigError("give a subcommand or --config")
        raw.update(_overrides(args))
        cfg = parse_config(raw, text)
        cache = args.kernel_cache or os.environ.get("FRACFLOW_CACHE")
        status = run(cfg, args.out, cache, args.threads)
    except ConfigError as exc:
        print(f"fracflow: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"fracflow: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = json.loads((Path(args.out) / "manifest.json").read_text())
    for name, ok in manifest["criteria"].items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    if manifest["error"]:
        print(f"ERROR {manifest['error']}")
    return status


if __name__ == "__main__":
    sys.exit(main())
