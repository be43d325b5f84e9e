"""Command line interface.

Subcommands: gen-set, estimate-reg, whitney, extend, gen-fn, norm, verify.
The verify subcommand writes the JSON and CSV reports plus rendered figures
into the output directory and exits nonzero when any check fails.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np


def _parse_grid(text: str):
    from .grid import Grid

    parts = text.split(";")
    spec = {}
    for p in parts:
        key, val = p.split("=")
        spec[key.strip()] = val.strip()
    dims = tuple(int(v) for v in spec["dims"].split(","))
    origin = tuple(float(v) for v in spec["origin"].split(","))
    h = float(spec["h"])
    return Grid(dims, origin, h)


def cmd_gen_set(args):
    from .grid import save_cellset
    from .regular_set import SetSpec, generate_set

    grid = _parse_grid(args.grid)
    params = json.loads(args.params) if args.params else {}
    rs = generate_set(SetSpec(args.kind, params), grid)
    save_cellset(args.out, rs.cells)
    print(
        json.dumps(
            {
                "theta": rs.theta,
                "delta": rs.delta,
                "cells": rs.cells.count,
                "measure": rs.cells.count * grid.h ** grid.n,
                "out": str(args.out),
            },
            sort_keys=True,
        )
    )
    return 0


def cmd_estimate_reg(args):
    from .grid import load_cellset
    from .regular_set import estimate_regularity

    cells = load_cellset(args.set)
    radii = [float(r) for r in args.radii.split(",")] if args.radii else None
    theta, delta, meta = estimate_regularity(cells, radii)
    print(
        json.dumps(
            {
                "theta": theta,
                "delta": delta,
                "centers_sampled": meta["centers_sampled"],
                "radii": meta["radii"],
            },
            sort_keys=True,
        )
    )
    return 0


def _regular_from_file(path, theta=None, delta=None):
    from .grid import load_cellset
    from .regular_set import RegularSet, estimate_regularity

    cells = load_cellset(path)
    if theta is None or delta is None:
        t, d, _ = estimate_regularity(cells)
        theta = theta if theta is not None else t
        delta = delta if delta is not None else d
    return RegularSet(cells, theta, delta)


def cmd_whitney(args):
    from .whitney import whitney_decompose

    S = _regular_from_file(args.set, args.theta, args.delta)
    W = whitney_decompose(S)
    cubes = [
        {
            "center": [float(c) for c in W.centers[row]],
            "radius": float(W.radii[row]),
            "flagged": bool(W.flagged[row]),
        }
        for row in range(len(W))
    ]
    Path(args.out).write_text(json.dumps(cubes, sort_keys=True, indent=1) + "\n")
    print(json.dumps({"cubes": len(cubes), "out": str(args.out)}, sort_keys=True))
    return 0


def cmd_extend(args):
    from .extension import build_extension_operator, extend
    from .grid import load_gridfunction, save_gridfunction

    S = _regular_from_file(args.set, args.theta, args.delta)
    f = load_gridfunction(args.fn)
    if f.grid != S.grid:
        raise SystemExit("function and set live on different grids")
    op = build_extension_operator(S, k=args.k)
    tf = extend(f, op)
    save_gridfunction(args.out, tf)
    sidecar = dict(op.sidecar())
    sidecar["out"] = str(args.out)
    Path(str(args.out) + ".json").write_text(json.dumps(sidecar, sort_keys=True) + "\n")
    print(json.dumps(sidecar, sort_keys=True))
    return 0


def cmd_gen_fn(args):
    from .grid import save_gridfunction
    from .harness import corpus_function

    grid = _parse_grid(args.grid)
    f = corpus_function(args.name, grid, seed=args.seed)
    save_gridfunction(args.out, f)
    print(json.dumps({"name": args.name, "out": str(args.out)}, sort_keys=True))
    return 0


def cmd_norm(args):
    from .functionals import RadiusLadder, SpaceParams, trace_seminorms, wholespace_norms
    from .grid import load_gridfunction

    f = load_gridfunction(args.fn)
    grid = f.grid
    s, k, p, q, u = (float(x) if x != "inf" else math.inf for x in args.params.split(","))
    params = SpaceParams(s=s, k=int(k), p=p, q=q, u=u)
    ladder = RadiusLadder.for_grid(grid, density=args.density)
    which = {"sobolev": ("sobolev",), "tl": ("tl",), "besov": ("besov",)}[args.space]
    if args.set:
        S = _regular_from_file(args.set, args.theta, args.delta)
        out = trace_seminorms(f, S, params, ladder, which=which)
    else:
        whole = {"sobolev": ("calderon",), "tl": ("tl",), "besov": ("besov_localapprox",)}
        out = wholespace_norms(f, params, ladder, which=whole[args.space])
    payload = {
        "space": args.space,
        "params": {"s": s, "k": int(k), "p": p, "q": q, "u": u},
        "value": out[[k_ for k_ in out if k_ != "lp"][0]] if len(out) > 1 else out["lp"],
        "parts": {k_: float(v) for k_, v in out.items()},
        "ladder": [float(t) for t in ladder.values],
    }
    text = json.dumps(payload, sort_keys=True, indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return 0


def cmd_verify(args):
    from .harness import default_config, emit_report, exit_code, run_verification

    if args.config:
        cfg = json.loads(Path(args.config).read_text())
    else:
        cfg = default_config(small=args.small)
    if args.out_dir:
        cfg["out_dir"] = args.out_dir
    if args.no_figures:
        cfg["figures"] = False
    out_dir = Path(cfg.get("out_dir", "verify_out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    report = run_verification(cfg)
    emit_report(report, "json", out_dir / "report.json")
    emit_report(report, "csv", out_dir / "report.csv")
    timings = cfg.pop("_timings", {})
    contexts = cfg.pop("_contexts", {})
    (out_dir / "timings.json").write_text(json.dumps(timings, sort_keys=True, indent=1) + "\n")
    figures = []
    if cfg.get("figures", True):
        from .plots import render_all

        try:
            figures = render_all(report, contexts, out_dir)
        except Exception as exc:  # figures must not fail the verification
            print(f"figure rendering failed: {exc!r}", file=sys.stderr)
    npass = sum(r.status == "pass" for r in report)
    nfail = sum(r.status == "fail" for r in report)
    nskip = sum(r.status == "skipped" for r in report)
    print(f"checks: {npass} pass, {nfail} fail, {nskip} skipped")
    for r in report:
        if r.status == "fail":
            print(f"  FAIL {r.name} [{r.details.get('set')}/{r.details.get('resolution')}]")
    print(f"report: {out_dir / 'report.json'}")
    if figures:
        print(f"figures: {len(figures)} files in {out_dir}")
    return exit_code(report)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="localext", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-set", help="rasterize a set construction to a SET1 file")
    p.add_argument("--kind", required=True)
    p.add_argument("--params", default="{}", help="JSON parameters for the construction")
    p.add_argument("--grid", required=True, help='"dims=256,256; origin=-0.5,-0.5; h=0.0078125"')
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_set)

    p = sub.add_parser("estimate-reg", help="estimate regularity constants of a SET1 file")
    p.add_argument("--set", required=True)
    p.add_argument("--radii", default=None, help="comma-separated radii")
    p.set_defaults(func=cmd_estimate_reg)

    p = sub.add_parser("whitney", help="cube family of the complement as JSON")
    p.add_argument("--set", required=True)
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_whitney)

    p = sub.add_parser("extend", help="extend a function from the set to the box")
    p.add_argument("--set", required=True)
    p.add_argument("--fn", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extend)

    p = sub.add_parser("gen-fn", help="sample a corpus function to a GFN1 file")
    p.add_argument("--name", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_fn)

    p = sub.add_parser("norm", help="trace or whole-space norm functionals")
    p.add_argument("--fn", required=True)
    p.add_argument("--set", default=None, help="SET1 file; omit for whole-box functionals")
    p.add_argument("--space", choices=["sobolev", "tl", "besov"], required=True)
    p.add_argument("--params", required=True, help="s,k,p,q,u (use inf where needed)")
    p.add_argument("--density", type=int, default=4)
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_norm)

    p = sub.add_parser("verify", help="run the full verification harness")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--small", action="store_true", help="reduced corpus for smoke tests")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_verify)

    args = ap.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
