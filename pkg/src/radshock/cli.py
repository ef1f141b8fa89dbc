"""Command line entry point: ``radshock <subcommand> [options]``.

Subcommands
  check      structure hypotheses (S0)-(S2), (H0)-(H3); exit 1 if any fails
  profile    stationary profile CSV and metadata
  evans      contour CSV and winding report; exit 1 unless condition (D) is certified
  resolvent  resolvent kernel CSV at one (lambda, y)
  green      low-frequency Green function samples and envelope fit
  evolve     nonlinear decay run, time series CSV and decay report

Configuration precedence: flags > TOML file (--config) > defaults. Unknown
keys are rejected. Every run writes config_echo.json to its output directory.

Exit codes
  0  success
  1  the computed check did not pass (hypothesis failed, (D) not certified,
     instability flagged)
  2  configuration or usage error
  3  numerical failure raised by a module (message on stderr)
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:          # python < 3.11
    import tomli as tomllib

from .errors import ConfigError, RadShockError

SUBCOMMANDS = ("check", "profile", "evans", "resolvent", "green", "evolve")
MODELS = ("hamer", "hamer_uncoupled", "euler")

DEFAULTS = {
    "model": "hamer",
    "epsilon": 0.2,
    "out": None,
    "contour_r": None,
    "contour_R": None,
    "samples": 256,
    "tol": 1e-12,
    "threads": 1,
    "seed": 0,
    # resolvent
    "lambda_re": None,
    "lambda_im": 0.0,
    "y": -1.0,
    # green
    "green_y": [-1.5, -3.0, -5.0, -7.0, -9.0],
    "green_t": [5.0, 10.0, 20.0, 30.0, 50.0, 75.0, 100.0],
    "indent": "right",
    # evolve
    "amplitude": 0.02,
    "width": 0.75,
    "center": -10.0,
    "T": 400.0,
    "nodes": 8001,
    "X_s": 200.0,
}

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v):
    return format(v, ".17g")


def _encode(obj):
    """JSON text with every float written to 17 significant digits."""
    if isinstance(obj, dict):
        items = [f"{json.dumps(str(k))}: {_encode(obj[k])}" for k in sorted(obj)]
        return "{" + ", ".join(items) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return _fmt(v) if math.isfinite(v) else "null"
    if isinstance(obj, complex):
        return _encode([obj.real, obj.imag])
    return json.dumps(str(obj))


def write_json(path, obj):
    Path(path).write_text(_encode(obj) + "\n")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


# ---------------------------------------------------------------------------
# configuration


def load_config(path):
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    unknown = sorted(set(data) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    return data


def resolve_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(load_config(args.config))
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    if cfg["out"] is None:
        root = os.environ.get("RADSHOCK_OUT", "radshock_out")
        cfg["out"] = str(Path(root) / args.command)
    if cfg["model"] not in MODELS:
        raise ConfigError(f"unknown model {cfg['model']!r}; choose from {', '.join(MODELS)}")
    if not cfg["epsilon"] > 0:
        raise ConfigError("epsilon must be positive")
    return cfg


def config_hash(cfg, keys=("model", "epsilon", "tol")):
    return hashlib.sha256(_encode({k: cfg[k] for k in keys}).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# shared builders

_PROFILE_CACHE = {}


def build_model(cfg):
    from . import model as md
    name = cfg["model"]
    if name == "euler":
        m = md.euler_rad()
        return m, md.euler_shock(cfg["epsilon"], m)
    m = md.hamer() if name == "hamer" else md.hamer_uncoupled()
    return m, md.hamer_shock(cfg["epsilon"])


def build_profile(cfg):
    from .profile import solve_profile
    key = config_hash(cfg)
    if key not in _PROFILE_CACHE:
        m, sh = build_model(cfg)
        _PROFILE_CACHE[key] = solve_profile(m, sh, tol=max(cfg["tol"], 1e-13))
    return _PROFILE_CACHE[key]


def build_system(cfg):
    from .evans import EvansSystem
    from .spectral import assemble
    return EvansSystem(assemble(build_profile(cfg)))


# ---------------------------------------------------------------------------
# subcommands


def cmd_check(cfg, out):
    from .model import structure_report
    m, sh = build_model(cfg)
    rep = structure_report(m, sh, seed=cfg["seed"])
    data = rep.to_json()
    data["passed"] = rep.passed
    data["failed"] = rep.failed()
    write_json(out / "structure.json", data)
    for e in rep.entries:
        state = {True: "pass", False: "FAIL", None: "skip"}[e["pass"]]
        print(f"{e['hypothesis']:<12s} {state}")
    return EXIT_OK if rep.passed else EXIT_FAILED


def cmd_profile(cfg, out):
    prof = build_profile(cfg)
    prof.to_csv(out / "profile.csv")
    meta = prof.metadata()
    meta["config_hash"] = config_hash(cfg)
    write_json(out / "profile_meta.json", meta)
    print(f"profile written: {len(prof.grid)} nodes, eta = {prof.eta:.6g}, X = {prof.X:.6g}")
    return EXIT_OK


def cmd_evans(cfg, out):
    from .evans import winding
    system = build_system(cfg)
    rep = winding(system, r=cfg["contour_r"], R=cfg["contour_R"], samples=cfg["samples"])
    rows = []
    for side in ("-", "+"):
        for lam, D, ls in zip(rep.contour, rep.D_values[side], rep.log_scale[side]):
            rows.append([float(lam.real), float(lam.imag), float(D.real), float(D.imag),
                         float(ls), side])
    write_csv(out / "evans_contour.csv",
              ["re_lambda", "im_lambda", "re_D", "im_D", "log_scale", "side"], rows)
    write_json(out / "winding_report.json", rep.to_json())
    print(f"winding_minus={rep.winding_minus} winding_plus={rep.winding_plus} "
          f"circle={rep.circle_winding.get('-')} certified={rep.certified}")
    return EXIT_OK if rep.certified else EXIT_FAILED


def cmd_resolvent(cfg, out):
    from .evans import pole_correlation, resolvent_kernel
    system = build_system(cfg)
    eps = cfg["epsilon"]
    lre = 1e-3 * eps * eps if cfg["lambda_re"] is None else cfg["lambda_re"]
    lam = complex(lre, cfg["lambda_im"])
    k = resolvent_kernel(system, lam, y=cfg["y"])
    n, m = k.G.shape[1] - 2, k.G.shape[2]
    header = ["x"] + [f"{part}_G{i + 1}{j + 1}" for i in range(n) for j in range(m)
                      for part in ("re", "im")]
    rows = []
    for xi, Gx in zip(k.x, k.first_row()):
        row = [float(xi)]
        for i in range(n):
            for j in range(m):
                row += [float(Gx[i, j].real), float(Gx[i, j].imag)]
        rows.append(row)
    write_csv(out / "resolvent.csv", header, rows)
    corr, col = pole_correlation(k, system.frame.profile)
    write_json(out / "resolvent_meta.json",
               {"lambda": [lam.real, lam.imag], "y": k.y, "jump_residual": k.jump_residual,
                "pole_correlation": corr, "column": col})
    print(f"jump residual {k.jump_residual:.3g}, pole correlation {corr:.8f}")
    return EXIT_OK


def cmd_green(cfg, out):
    from .greenfn import excited_data, fit_envelope, low_freq_green
    system = build_system(cfg)
    prof = system.frame.profile
    x = np.linspace(-40.0, 40.0, 201)
    t = np.array(cfg["green_t"], dtype=float)

    def one(y):
        return low_freq_green(system, x, t, y, r=cfg["contour_r"], R=cfg["contour_R"],
                              samples=cfg["samples"], indent=cfg["indent"])

    ys = [float(y) for y in cfg["green_y"]]
    with ThreadPoolExecutor(max_workers=max(1, int(cfg["threads"]))) as pool:
        samples = list(pool.map(one, ys))
    speed = float(excited_data(prof, "-").speeds[0]) if min(ys) < 0 else 0.0
    fit = fit_envelope(samples, speed)
    n = prof.model.n
    for s in samples:
        rows = []
        for it, tt in enumerate(s.t):
            for ix, xx in enumerate(s.x):
                row = [float(tt), float(xx), s.y]
                row += [float(v) for v in s.GI[it, ix].ravel()]
                row += [float(v) for v in s.E[it, ix].ravel()]
                rows.append(row)
        ij = [f"{i + 1}{j + 1}" for i in range(n) for j in range(n)]
        write_csv(out / f"green_y{s.y:+.3f}.csv",
                  ["t", "x", "y"] + [f"GI_{c}" for c in ij] + [f"E_{c}" for c in ij], rows)
    write_json(out / "envelope.json",
               {"C": fit.C, "M": fit.M, "speed": fit.speed, "area": fit.area,
                "samples": cfg["samples"], "ys": ys, "t": list(t),
                "imag_ratio": max(s.imag_ratio for s in samples)})
    print(f"envelope C={fit.C:.6g} M={fit.M:.6g}")
    return EXIT_OK


def cmd_evolve(cfg, out):
    from .evolve import bump, run_decay
    prof = build_profile(cfg)
    m = prof.model
    pert = bump(cfg["center"], cfg["width"], cfg["amplitude"], m.n)
    rep = run_decay(m, prof, pert, T=cfg["T"], X_s=cfg["X_s"], nodes=cfg["nodes"])
    rep.write_csv(out / "decay.csv")
    data = rep.to_json()
    write_json(out / "decay_report.json", data)
    ex = data["exponents"]
    print(f"e2={ex['L2']:.4f} einf={ex['Linf']:.4f} alpha_dot={ex['alpha_dot']:.4f} "
          f"unstable={rep.unstable}")
    return EXIT_FAILED if rep.unstable else EXIT_OK


COMMANDS = {"check": cmd_check, "profile": cmd_profile, "evans": cmd_evans,
            "resolvent": cmd_resolvent, "green": cmd_green, "evolve": cmd_evolve}


# ---------------------------------------------------------------------------
# parser


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser():
    p = argparse.ArgumentParser(prog="radshock", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name, help=COMMANDS[name].__name__.replace("cmd_", ""))
        s.add_argument("--config", help="TOML file with configuration keys")
        s.add_argument("--model", choices=MODELS)
        s.add_argument("--epsilon", type=float)
        s.add_argument("--out", help="output directory (default $RADSHOCK_OUT/<command>)")
        s.add_argument("--contour-r", dest="contour_r", type=float)
        s.add_argument("--contour-R", dest="contour_R", type=float)
        s.add_argument("--samples", type=int)
        s.add_argument("--tol", type=float)
        s.add_argument("--threads", type=int)
        s.add_argument("--seed", type=int)
        if name == "resolvent":
            s.add_argument("--lambda-re", dest="lambda_re", type=float)
            s.add_argument("--lambda-im", dest="lambda_im", type=float)
            s.add_argument("--y", type=float)
        if name == "green":
            s.add_argument("--green-y", dest="green_y", type=_floats, help="comma separated")
            s.add_argument("--green-t", dest="green_t", type=_floats, help="comma separated")
            s.add_argument("--indent", choices=("right", "left"))
        if name == "evolve":
            s.add_argument("--amplitude", type=float)
            s.add_argument("--width", type=float)
            s.add_argument("--center", type=float)
            s.add_argument("--T", dest="T", type=float)
            s.add_argument("--nodes", type=int)
            s.add_argument("--X-s", dest="X_s", type=float)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (ConfigError, OSError, tomllib.TOMLDecodeError) as exc:
        print(f"radshock: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config_echo.json", dict(cfg, command=args.command))
    try:
        return COMMANDS[args.command](cfg, out)
    except RadShockError as exc:
        print(f"radshock: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
