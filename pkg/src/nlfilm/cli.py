"""Command-line front end: config parsing, subcommands, persistence.

Every run reads one TOML config validated against a strict schema, writes a
manifest with all effective parameters, and emits CSV plot data.  Exit codes:
0 pass, 2 trend-assertion failure, 3 config error, 4 numerical error.
"""

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, field as dc_field

import numpy as np

try:
    import tomllib as tomli
except ModuleNotFoundError:
    import tomli

from . import energy as en
from . import field as fd
from . import gamma as gm
from . import geometry as geo
from . import kernel as kn
from .errors import ConfigError, NlfilmError
from .nlgrad import Horizon, NonlocalOperator, nullspace


# ---------------------------------------------------------------------------
# configuration schema


_SCHEMA = {
    "kernel": {
        "s": (float, 0.5),
        "cutoff": (str, "bump"),
    },
    "grid": {
        "dims": (list, [32, 32, 16]),
        "lengths": (list, [6.0, 6.0, 6.0]),
    },
    "domain": {
        "shape": (str, "rectangle"),
        "width": (float, 1.5),
        "height": (float, 1.5),
        "radius": (float, 1.0),
        "center": (list, [3.0, 3.0]),
        "interval": (list, [2.5, 3.5]),
    },
    "horizon": {
        "inplane": (float, 0.5),
        "outofplane": (float, 0.25),
        "eps": (float, 1.0),
    },
    "density": {
        "name": (str, "anisotropic"),
        "p": (float, 2.0),
        "alpha": (float, 1.0),
        "v": (list, [0.0, 0.0, 0.2]),
    },
    "sweep": {
        "regime": (str, "aniso"),
        "eps_list": (list, [0.8, 0.5, 0.3]),
        "lam": (float, 1.0),
        "max_iters": (int, 2000),
        "gradient_tol": (float, 1e-6),
    },
    "output": {
        "directory": (str, "results"),
        "seed": (int, 0),
        "threads": (int, 0),
    },
}


@dataclass
class RunConfig:
    """Validated run parameters; every field is echoed into the manifest."""

    blocks: dict = dc_field(default_factory=dict)

    def __getitem__(self, key):
        return self.blocks[key]

    def as_dict(self):
        return {k: dict(v) for k, v in self.blocks.items()}


def _coerce(value, typ, path):
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return int(value)
    if typ is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if typ is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return list(value)
    raise ConfigError(f"{path}: unsupported schema type")


def parse_config(path):
    """Read and validate a TOML config; unknown keys are rejected by path."""
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}")
    blocks = {}
    for section, entries in raw.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section '{section}'")
        if not isinstance(entries, dict):
            raise ConfigError(f"{section}: expected a table")
        for key in entries:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown config key '{section}.{key}'")
    for section, keys in _SCHEMA.items():
        got = raw.get(section, {})
        blocks[section] = {
            key: _coerce(got[key], typ, f"{section}.{key}")
            if key in got else default
            for key, (typ, default) in keys.items()
        }
    cfg = RunConfig(blocks)
    _validate(cfg)
    return cfg


def _validate(cfg):
    hz = cfg["horizon"]
    if not 0.0 <= hz["inplane"] <= 1.0 or not 0.0 <= hz["outofplane"] <= 1.0:
        raise ConfigError("horizon.inplane/outofplane must lie in [0, 1]")
    if hz["eps"] <= 0:
        raise ConfigError("horizon.eps must be positive")
    if hz["outofplane"] > hz["eps"]:
        raise ConfigError(
            f"horizon.outofplane = {hz['outofplane']} exceeds horizon.eps = "
            f"{hz['eps']}; the out-of-plane radius must not exceed the "
            "thickness")
    if cfg["kernel"]["cutoff"] not in ("bump", "plateau"):
        raise ConfigError("kernel.cutoff must be 'bump' or 'plateau'")
    if not 0.0 < cfg["kernel"]["s"] < 1.0:
        raise ConfigError("kernel.s must lie in (0, 1)")
    if cfg["domain"]["shape"] not in ("rectangle", "disk"):
        raise ConfigError("domain.shape must be 'rectangle' or 'disk'")
    if cfg["density"]["name"] not in en.BUILTIN_DENSITIES:
        raise ConfigError(
            f"density.name must be one of {sorted(en.BUILTIN_DENSITIES)}")
    if cfg["sweep"]["regime"] not in ("aniso", "iso"):
        raise ConfigError("sweep.regime must be 'aniso' or 'iso'")
    eps_list = cfg["sweep"]["eps_list"]
    if not eps_list or list(eps_list) != sorted(eps_list, reverse=True) \
            or min(eps_list) <= 0:
        raise ConfigError("sweep.eps_list must be positive and decreasing")
    dims = cfg["grid"]["dims"]
    if len(dims) != 3 or len(cfg["grid"]["lengths"]) != 3:
        raise ConfigError("grid.dims and grid.lengths must have 3 entries")


# ---------------------------------------------------------------------------
# construction helpers


def _build_kernel(cfg):
    return kn.make_truncated_fractional(cfg["kernel"]["s"],
                                        cfg["kernel"]["cutoff"])


def _build_grid(cfg):
    return fd.Grid(tuple(int(n) for n in cfg["grid"]["dims"]),
                   tuple(float(x) for x in cfg["grid"]["lengths"]))


def _build_cross_section(cfg):
    d = cfg["domain"]
    center = tuple(d["center"])
    if d["shape"] == "rectangle":
        return geo.Rectangle(d["width"], d["height"], center=center)
    return geo.Disk(d["radius"], center=center)


def _build_domain(cfg, horizon=None):
    hz = horizon or Horizon(cfg["horizon"]["inplane"],
                            cfg["horizon"]["outofplane"])
    return geo.SlabDomain(_build_cross_section(cfg),
                          tuple(cfg["domain"]["interval"]), hz,
                          _build_grid(cfg))


def _build_density(cfg):
    d = cfg["density"]
    if d["name"] == "lp":
        return en.lp_density(d["p"])
    if d["name"] == "anisotropic":
        return en.anisotropic_density(d["alpha"], tuple(d["v"]))
    return en.double_well_density()


def _random_field(cfg, grid, mask, rng):
    data = rng.normal(size=grid.dims + (3,))
    return fd.masked(grid, data, mask)


# ---------------------------------------------------------------------------
# output helpers


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(x) if isinstance(x, float) else x
                             for x in row])


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, fd.Field):
        return {"grid": list(o.grid.dims), "channels": o.components}
    return str(o)


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, default=_json_default, sort_keys=True)


class Run:
    """Output directory handling plus the manifest lifecycle."""

    def __init__(self, cfg, command, out=None, seed=None):
        if out is not None:
            cfg.blocks["output"]["directory"] = str(out)
        if seed is not None:
            cfg.blocks["output"]["seed"] = int(seed)
        self.cfg = cfg
        self.command = command
        self.outdir = cfg["output"]["directory"]
        os.makedirs(self.outdir, exist_ok=True)
        self.rng = np.random.default_rng(cfg["output"]["seed"])
        self.manifest = {
            "command": command,
            "config": cfg.as_dict(),
            "partial": True,
        }
        self.flush()

    def path(self, name):
        return os.path.join(self.outdir, name)

    def flush(self):
        _write_json(self.path("manifest.json"), self.manifest)

    def finish(self, **extra):
        self.manifest.update(extra)
        self.manifest["partial"] = False
        self.flush()


# ---------------------------------------------------------------------------
# subcommands


def cmd_kernel_check(cfg, out, seed):
    run = Run(cfg, "kernel check", out, seed)
    k = _build_kernel(cfg)
    report = kn.hypothesis_report(k)
    kbar = kn.reduce_kernel(k)
    report["reduced_mass"] = kbar.mass()
    r = np.linspace(1e-4, 1.0, 400)
    _write_csv(run.path("kernel_profile.csv"), ["r", "q_radial"],
               list(zip(r, kn.q_profile(k).q_profile(r))))
    _write_json(run.path("kernel_report.json"), report)
    ok = bool(report.get("all_ok", False))
    run.finish(report=report, status="pass" if ok else "fail")
    return 0 if ok else 4


def cmd_nlgrad_apply(cfg, out, seed, field_path=None):
    run = Run(cfg, "nlgrad apply", out, seed)
    k = _build_kernel(cfg)
    grid = _build_grid(cfg)
    hz = Horizon(cfg["horizon"]["inplane"], cfg["horizon"]["outofplane"])
    op = NonlocalOperator(k, hz, grid)
    if field_path:
        u = fd.load_field(field_path)
    else:
        dom = _build_domain(cfg)
        _, fat, _ = dom.masks()
        u = _random_field(cfg, grid, fat, run.rng)
    g = op.gradient(u)
    fd.dump_field(u, run.path("input_field.bin"))
    fd.dump_field(g, run.path("gradient_field.bin"))
    stats = {"input_l2": fd.lp_norm(u, 2), "gradient_l2": fd.lp_norm(g, 2)}
    _write_json(run.path("nlgrad_apply.json"), stats)
    run.finish(stats=stats)
    return 0


def cmd_nlgrad_nullspace(cfg, out, seed):
    run = Run(cfg, "nlgrad nullspace", out, seed)
    k = _build_kernel(cfg)
    grid = _build_grid(cfg)
    hz = Horizon(cfg["horizon"]["inplane"], cfg["horizon"]["outofplane"])
    op = NonlocalOperator(k, hz, grid)
    dom = _build_domain(cfg)
    basis = nullspace(op, dom)
    payload = {
        "scalar_dimension": basis.scalar_dimension,
        "dimension": basis.dimension,
        "sigma_min_positive": basis.sigma_min_positive,
        "singular_values_tail": np.sort(basis.singular_values)[:20].tolist(),
    }
    fields = basis.fields()
    for i, h in enumerate(fields[:3]):
        fd.dump_field(h, run.path(f"nullspace_field_{i}.bin"))
    _write_json(run.path("nullspace.json"), payload)
    run.finish(nullspace=payload)
    return 0


def cmd_geometry_weight(cfg, out, seed):
    run = Run(cfg, "geometry weight", out, seed)
    dom = _build_domain(cfg)
    cx, cy = _build_cross_section(cfg).center
    hx = dom.cross_section.half_extent[0]
    dbar = dom.horizon.inplane
    upper = cx + hx + dbar
    xs = np.linspace(cx, upper - 1e-9 * max(upper, 1.0), 200)
    rows = []
    for x in xs:
        try:
            rows.append((x, dom.limit_weight([x, cy])))
        except NlfilmError:
            break
    _write_csv(run.path("limit_weight.csv"), ["x", "d_weight"], rows)
    m_omega, m_fat, m_plane = dom.masks()
    stats = {"omega_nodes": int(m_omega.sum()),
             "fattened_nodes": int(m_fat.sum()),
             "plane_nodes": int(m_plane.sum()),
             "thickness": dom.thickness}
    _write_json(run.path("geometry.json"), stats)
    run.finish(stats=stats)
    return 0


def cmd_energy_eval(cfg, out, seed, field_path=None):
    run = Run(cfg, "energy eval", out, seed)
    k = _build_kernel(cfg)
    grid = _build_grid(cfg)
    hz = Horizon(cfg["horizon"]["inplane"], cfg["horizon"]["outofplane"])
    eps = cfg["horizon"]["eps"]
    op = NonlocalOperator(k, hz.rescale(eps), grid)
    dom = _build_domain(cfg, hz.rescale(eps))
    W = _build_density(cfg)
    _, fat, _ = dom.masks()
    if field_path:
        u = fd.load_field(field_path)
    else:
        u = _random_field(cfg, grid, fat, run.rng)
    lam = cfg["sweep"]["lam"]
    total, terms = en.stabilized_energy(W, op, dom, eps, lam, u,
                                        return_terms=True)
    payload = {"total": total, **terms, "lam": lam, "eps": eps}
    _write_json(run.path("energy.json"), payload)
    run.finish(energy=payload)
    return 0


def cmd_gamma_sweep(cfg, out, seed):
    run = Run(cfg, "gamma sweep", out, seed)
    k = _build_kernel(cfg)
    grid = _build_grid(cfg)
    cs = _build_cross_section(cfg)
    interval = tuple(cfg["domain"]["interval"])

    def factory(hz):
        return geo.SlabDomain(cs, interval, hz, grid)

    dom0 = factory(Horizon(0.0, 0.0))
    mask_omega = dom0.masks()[0]
    X, Y, Z = grid.mesh()
    cx, cy = cs.center
    hx, hy = cs.half_extent
    z0, z1 = interval
    zc, zr = 0.5 * (z0 + z1), 0.45 * (z1 - z0)
    rad = np.sqrt(((X - cx) / hx) ** 2 + ((Y - cy) / hy) ** 2)
    prof = np.clip(1.0 - rad, 0.0, 1.0) ** 4 \
        * np.clip(1.0 - ((Z - zc) / zr) ** 2, 0.0, 1.0) ** 4
    Vdata = np.zeros(grid.dims + (9,))
    Vdata[..., 0] = prof
    Vdata[..., 4] = 0.5 * prof
    Vdata[..., 8] = 0.25 * prof
    Vdata *= mask_omega[..., None]
    V = fd.masked(grid, Vdata, mask_omega)

    W = _build_density(cfg)
    sw = cfg["sweep"]
    mcfg = gm.MinimizeConfig(max_iters=sw["max_iters"],
                             gradient_tol=sw["gradient_tol"])
    sweep = gm.gamma_sweep(sw["regime"], sw["eps_list"], W, sw["lam"], k,
                           factory, V, cfg=mcfg)
    rows = [(r["eps"], r["value"], r["gap"], r["distance"])
            for r in sweep.records]
    _write_csv(run.path("sweep.csv"), ["eps", "energy", "gap", "distance"],
               rows)
    payload = {
        "regime": sweep.regime,
        "eps_list": sweep.eps_list,
        "limit_value": sweep.limit_value,
        "trend_ok": sweep.trend_ok,
        "records": [{k2: v for k2, v in r.items() if k2 != "field"}
                    for r in sweep.records],
    }
    _write_json(run.path("sweep.json"), payload)
    for r in sweep.records:
        fd.dump_field(r["field"], run.path(f"minimizer_eps_{r['eps']}.bin"))
    fd.dump_field(sweep.limit_minimizer, run.path("limit_minimizer.bin"))
    diag = gm.compactness_diagnostic(sweep)
    _write_json(run.path("compactness.json"),
                {k2: v for k2, v in diag.items() if k2 != "pairings"})
    run.finish(sweep=payload)
    if not sweep.trend_ok:
        print("trend assertion failed: gap/distance not non-increasing "
              "within 10% slack", file=sys.stderr)
        return 2
    return 0


def cmd_field_info(path):
    info = fd.field_info(path)
    json.dump(info, sys.stdout, indent=2)
    print()
    return 0


# ---------------------------------------------------------------------------
# dispatch


def _apply_threads(n):
    if n and n > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def build_parser():
    p = argparse.ArgumentParser(prog="nlfilm")
    sub = p.add_subparsers(dest="group", required=True)
    specs = [
        ("kernel", "check"), ("nlgrad", "apply"), ("nlgrad", "nullspace"),
        ("geometry", "weight"), ("energy", "eval"), ("gamma", "sweep"),
    ]
    groups = {}
    for group_name, cmd_name in specs:
        if group_name not in groups:
            gp = sub.add_parser(group_name)
            groups[group_name] = gp.add_subparsers(dest="action",
                                                   required=True)
        ap = groups[group_name].add_parser(cmd_name)
        ap.add_argument("--config", required=True)
        ap.add_argument("--out", default=None)
        ap.add_argument("--seed", type=int, default=None)
        ap.add_argument("--threads", type=int, default=None)
        if (group_name, cmd_name) in (("nlgrad", "apply"),
                                      ("energy", "eval")):
            ap.add_argument("--field", default=None)
    fp = sub.add_parser("field")
    fsub = fp.add_subparsers(dest="action", required=True)
    ip = fsub.add_parser("info")
    ip.add_argument("path")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.group == "field":
        return cmd_field_info(args.path)
    try:
        cfg = parse_config(args.config)
        if args.threads is not None:
            cfg.blocks["output"]["threads"] = args.threads
        _apply_threads(cfg["output"]["threads"])
        key = (args.group, args.action)
        if key == ("kernel", "check"):
            return cmd_kernel_check(cfg, args.out, args.seed)
        if key == ("nlgrad", "apply"):
            return cmd_nlgrad_apply(cfg, args.out, args.seed,
                                    field_path=args.field)
        if key == ("nlgrad", "nullspace"):
            return cmd_nlgrad_nullspace(cfg, args.out, args.seed)
        if key == ("geometry", "weight"):
            return cmd_geometry_weight(cfg, args.out, args.seed)
        if key == ("energy", "eval"):
            return cmd_energy_eval(cfg, args.out, args.seed,
                                   field_path=args.field)
        if key == ("gamma", "sweep"):
            return cmd_gamma_sweep(cfg, args.out, args.seed)
        raise ConfigError(f"unknown command {key}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except NlfilmError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
