"""Command-line entry point: ``python -m xy_butterfly <subcommand>``.

Runs are described by a JSON config (see ``RunConfig``); command-line flags
override config values. Every output file starts with a metadata header
holding the config hash, the seed and the package version.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import os
import sys
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from xy_butterfly import __version__
from xy_butterfly.analytic import butterfly_velocity, vb_sweep, write_sweep_csv
from xy_butterfly.butterfly import run_pipeline
from xy_butterfly.model import ModelParams, build_xy_hamiltonian, evolution_from_eigh
from xy_butterfly.rtr import (
    RtrTimeCompiler,
    TrotterTimeCompiler,
    TrustRegionConfig,
    normalized_error,
    brickwall_expand,
    rtr_compile,
    trotter_compile,
)
from xy_butterfly.sim import NoiseSpec
from xy_butterfly.yky import MODES, otoc_surface, write_surface_csv

OUTPUT_ENV = "XY_BUTTERFLY_OUTPUT"
COMPILERS = ("exact", "rtr", "trotter")
# per-slice settings for surfaces: warm starts make a loose tolerance cheap
PIPELINE_TRUST_REGION = {"error_tol": 1e-3, "max_iters": 150, "restarts": 2}


class UsageError(Exception):
    pass


# -- configuration ---------------------------------------------------------------


@dataclass
class CompilerConfig:
    kind: str = "exact"
    layers: int = 10
    warm_restarts: int = 0
    trust_region: dict = field(default_factory=dict)


@dataclass
class RunConfig:
    model: dict = field(default_factory=lambda: {"J": 1.0, "r": 0.0, "h": 0.0, "n": 5, "boundary": "open"})
    mode: str = "exact"
    compiler: CompilerConfig = field(default_factory=CompilerConfig)
    t_grid: dict = field(default_factory=lambda: {"start": 0.0, "stop": 3.0, "step": 0.05})
    j_list: list | None = None
    shots: int | None = None
    noise: dict = field(default_factory=lambda: {"p2": 0.0, "p_read": 0.0})
    trajectories: int = 100
    seed: int = 0
    threshold: float = 0.1
    stop_when_crossed: bool = False
    output_dir: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        comp = data.pop("compiler", {})
        if not isinstance(comp, dict):
            raise UsageError("compiler must be a mapping")
        bad = set(comp) - {f.name for f in fields(CompilerConfig)}
        if bad:
            raise UsageError(f"unknown compiler keys: {sorted(bad)}")
        cfg = cls(compiler=CompilerConfig(**comp), **data)
        cfg.validate()
        return cfg

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def config_hash(self) -> str:
        canon = dict(asdict(self))
        canon.pop("output_dir")
        return hashlib.sha256(json.dumps(canon, sort_keys=True).encode()).hexdigest()[:16]

    def validate(self) -> None:
        if self.mode not in MODES:
            raise UsageError(f"mode must be one of {MODES}")
        if self.compiler.kind not in COMPILERS:
            raise UsageError(f"compiler kind must be one of {COMPILERS}")
        if self.compiler.layers < 1:
            raise UsageError("compiler layers must be at least 1")
        if self.t_grid["step"] <= 0 or self.t_grid["stop"] < self.t_grid["start"]:
            raise UsageError("t_grid needs step > 0 and stop >= start")
        try:
            self.params()
            self.noise_spec()
            self.trust_region()
        except (TypeError, ValueError) as exc:
            raise UsageError(str(exc)) from exc

    def params(self) -> ModelParams:
        return ModelParams(**self.model)

    def noise_spec(self) -> NoiseSpec:
        return NoiseSpec(**self.noise)

    def trust_region(self, pipeline: bool = False) -> TrustRegionConfig:
        base = PIPELINE_TRUST_REGION if pipeline else {}
        return TrustRegionConfig(**{**base, **self.compiler.trust_region})

    def times(self) -> np.ndarray:
        g = self.t_grid
        count = int(round((g["stop"] - g["start"]) / g["step"])) + 1
        return np.round(g["start"] + g["step"] * np.arange(count), 12)

    def make_compiler(self):
        kind = self.compiler.kind
        if kind == "exact":
            return None
        if kind == "trotter":
            return TrotterTimeCompiler(self.params(), self.compiler.layers)
        return RtrTimeCompiler(
            self.params(), self.compiler.layers, self.trust_region(pipeline=True), self.seed, self.compiler.warm_restarts
        )


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    return data


def _override(data: dict, args) -> dict:
    model = dict(RunConfig().model, **data.get("model", {}))
    for key in ("J", "r", "h", "n", "boundary"):
        val = getattr(args, key, None)
        if val is not None:
            model[key] = val
    data["model"] = model
    comp = dict(data.get("compiler", {}))
    if getattr(args, "compiler", None):
        comp["kind"] = args.compiler
    if getattr(args, "layers", None) is not None:
        comp["layers"] = args.layers
    data["compiler"] = comp
    noise = dict(RunConfig().noise, **data.get("noise", {}))
    for key in ("p2", "p_read"):
        val = getattr(args, key, None)
        if val is not None:
            noise[key] = val
    data["noise"] = noise
    for key in ("mode", "shots", "seed", "trajectories", "output_dir"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if getattr(args, "j", None):
        data["j_list"] = args.j
    if getattr(args, "t_max", None) is not None:
        data["t_grid"] = dict(RunConfig().t_grid, **data.get("t_grid", {}), stop=args.t_max)
    return data


def resolve_config(args) -> RunConfig:
    return RunConfig.from_dict(_override(load_config(args.config), args))


# -- output ----------------------------------------------------------------------


def output_dir(cfg: RunConfig | None, args) -> Path:
    d = getattr(args, "output_dir", None) or (cfg.output_dir if cfg else None)
    d = d or os.environ.get(OUTPUT_ENV) or "."
    path = Path(d)
    path.mkdir(parents=True, exist_ok=True)
    return path


def metadata(cfg: RunConfig | None, seed=None) -> dict:
    return {
        "config_hash": cfg.config_hash() if cfg else None,
        "seed": cfg.seed if cfg else seed,
        "version": __version__,
    }


def write_atomic(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(meta: dict, body: str) -> str:
    head = "".join(f"# {k}={v}\n" for k, v in meta.items())
    return head + body


def json_text(meta: dict, payload: dict) -> str:
    return json.dumps({"metadata": meta, **payload}, indent=1) + "\n"


# -- subcommands -----------------------------------------------------------------


def cmd_analytic(args) -> int:
    if not args.sweep:
        res = butterfly_velocity(args.J, args.r, args.h)
        print(f"{res.v_B:.6f}")
        return 0
    r_grid = np.linspace(*args.r_range, args.points)
    h_grid = np.linspace(*args.h_range, args.points)
    buf = io.StringIO()
    write_sweep_csv(buf, r_grid, h_grid, vb_sweep(r_grid, h_grid, args.J))
    text = csv_text(metadata(None), buf.getvalue())
    if args.out:
        write_atomic(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_compile(args) -> int:
    cfg = resolve_config(args)
    depths = args.depths
    if any(d < 1 for d in depths):
        raise UsageError("layer counts must be at least 1")
    params = cfg.params()
    U = evolution_from_eigh(*np.linalg.eigh(build_xy_hamiltonian(params)), args.t)
    out = output_dir(cfg, args)
    meta = metadata(cfg)
    rows = ["layers,rtr_error,trotter_error\n"]
    for m in depths:
        res = rtr_compile(U, m, cfg.trust_region(), seed=cfg.seed)
        trot = normalized_error(brickwall_expand(trotter_compile(params, args.t, m)), U)
        rows.append(f"{m},{res.final_error:.12g},{trot:.12g}\n")
        payload = json.loads(res.to_json())
        payload["t"] = args.t
        write_atomic(out / f"compile_m{m}.json", json_text(meta, payload))
        print(f"layers={m} rtr={res.final_error:.3e} trotter={trot:.3e}")
    write_atomic(out / "error_vs_layers.csv", csv_text(meta, "".join(rows)))
    return 0


def _surface(cfg: RunConfig):
    return dict(
        compiler=cfg.make_compiler(),
        noise=cfg.noise_spec(),
        shots=cfg.shots,
        seed=cfg.seed,
        trajectories=cfg.trajectories,
        stop_when_crossed=cfg.threshold if cfg.stop_when_crossed else None,
    )


def _j_list(cfg: RunConfig):
    return cfg.j_list or list(range(2, cfg.params().n + 1))


def _surface_text(cfg, records) -> str:
    buf = io.StringIO()
    write_surface_csv(buf, records)
    return csv_text(metadata(cfg), buf.getvalue())


def cmd_otoc(args) -> int:
    cfg = resolve_config(args)
    records = otoc_surface(cfg.params(), _j_list(cfg), cfg.times(), cfg.mode, **_surface(cfg))
    path = output_dir(cfg, args) / "surface.csv"
    write_atomic(path, _surface_text(cfg, records))
    failed = sum(r.error is not None for r in records)
    print(f"wrote {len(records)} points to {path} ({failed} failed)")
    return 0


def _velocity(cfg: RunConfig):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = run_pipeline(cfg.params(), _j_list(cfg), cfg.times(), cfg.mode, cfg.threshold, **_surface(cfg))
    return res, [str(w.message) for w in caught]


SUMMARY_HEADER = "J,r,h,n,mode,vB_analytic,vB_fit,rel_dev\n"


def _summary_row(cfg: RunConfig, res) -> str:
    m = cfg.model
    fit = "" if res.fit is None else f"{res.fit.v_B:.12g}"
    return f"{m['J']},{m['r']},{m['h']},{m['n']},{cfg.mode},{res.analytic_vB:.12g},{fit},{res.rel_dev:.12g}\n"


def cmd_velocity(args) -> int:
    cfg = resolve_config(args)
    res, notes = _velocity(cfg)
    for msg in notes:
        print(f"warning: {msg}", file=sys.stderr)
    out = output_dir(cfg, args)
    meta = metadata(cfg)
    write_atomic(out / "surface.csv", _surface_text(cfg, res.surface))
    write_atomic(out / "fit.json", json_text(meta, res.fit_report()))
    write_atomic(out / "summary.csv", csv_text(meta, SUMMARY_HEADER + _summary_row(cfg, res)))
    fit = "n/a" if res.fit is None else f"{res.fit.v_B:.4f}"
    print(f"v_B analytic {res.analytic_vB:.4f}  fitted {fit}  rel_dev {res.rel_dev:.4f}")
    return 0 if res.fit is not None else 1


def _sweep_point(cfg_json: str) -> str:
    cfg = RunConfig.from_dict(json.loads(cfg_json))
    res, _ = _velocity(cfg)
    return _summary_row(cfg, res)


def cmd_sweep(args) -> int:
    """Velocity pipeline over an (r, h) grid, ``--jobs`` points at a time."""
    base = resolve_config(args)
    jobs = []
    for r in args.r_values:
        for h in args.h_values:
            cfg = RunConfig.from_dict(json.loads(base.to_json()))
            cfg.model = dict(cfg.model, r=r, h=h)
            jobs.append(cfg.to_json())
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    path = output_dir(base, args) / "sweep.csv"
    write_atomic(path, csv_text(metadata(base), SUMMARY_HEADER + "".join(rows)))
    print(f"wrote {len(rows)} rows to {path}")
    return 0


# -- parser ----------------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config; flags override its values")
    p.add_argument("--J", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--h", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--boundary", choices=("open", "periodic"))
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--compiler", choices=COMPILERS)
    p.add_argument("--layers", type=int)
    p.add_argument("--shots", type=int)
    p.add_argument("--p2", type=float)
    p.add_argument("--p-read", dest="p_read", type=float)
    p.add_argument("--trajectories", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--j", type=_ints, help="probe sites, e.g. 2,3,4,5")
    p.add_argument("--t-max", dest="t_max", type=float)
    p.add_argument("--output-dir", dest="output_dir", help=f"defaults to ${OUTPUT_ENV} or the working directory")
    p.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xy-butterfly", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analytic", help="analytic butterfly velocity")
    p.add_argument("--J", type=float, default=1.0)
    p.add_argument("--r", type=float, default=0.0)
    p.add_argument("--h", type=float, default=0.0)
    p.add_argument("--sweep", action="store_true", help="emit a v_B grid over r and h as CSV")
    p.add_argument("--r-range", dest="r_range", type=float, nargs=2, default=(-3.0, 3.0))
    p.add_argument("--h-range", dest="h_range", type=float, nargs=2, default=(-3.0, 3.0))
    p.add_argument("--points", type=int, default=61)
    p.add_argument("--out", help="CSV path for --sweep (default stdout)")
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("compile", help="RTR and Trotter error against circuit depth")
    _run_flags(p)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--depths", type=_ints, default=[2, 4, 6, 8])
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("otoc", help="squared-commutator surface over (j, t)")
    _run_flags(p)
    p.set_defaults(func=cmd_otoc)

    p = sub.add_parser("velocity", help="full pipeline: surface, spreading times, fit")
    _run_flags(p)
    p.set_defaults(func=cmd_velocity)

    p = sub.add_parser("sweep", help="velocity pipeline over a grid of (r, h)")
    _run_flags(p)
    p.add_argument("--r-values", dest="r_values", type=_floats, default=[0.0])
    p.add_argument("--h-values", dest="h_values", type=_floats, default=[0.0])
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "dump_config", False):
            sys.stdout.write(resolve_config(args).to_json())
            return 0
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be at least 1")
        return args.func(args)
    except UsageError as exc:
        print(f"xy-butterfly: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, ArithmeticError) as exc:
        print(f"xy-butterfly: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
