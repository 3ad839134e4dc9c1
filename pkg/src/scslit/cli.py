"""Command-line entry point: scenario ingestion, staged runs, exports.

A scenario is a single JSON document: an initial polygon (a preset shape or
a serialized state), a list of stages (each growing a set of slits at fixed
rate ratios until slit 1 reaches a target length), tolerances, and output
requests. Stage k+1 starts from the merged/flattened output of stage k.

Outputs are deterministic: numbers are printed with repr round-trip
precision (JSON) or 17 significant digits (CSV), no timestamps.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import scmap
from .errors import ConfigError, ScslitError
from .evolution import (
    SlitPlan,
    control_coefficients,
    evolution_identity_residual,
    flatten_to_polygon,
    merge_degenerate,
    rescale_for_length_param,
)
from .evolution import evolve as _evolve
from .geometry import polylines_to_svg
from .oracle import verify_trace
from .presets import PRESETS, half_plane_state, rectangle_state
from .state import AccessoryState, SlitGroup
from .scmap import GridSpec, bracket_for_boundary_point, grid_image, locate_prevertex

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _fmt(x: float) -> str:
    return "%.17g" % x


# ---------------------------------------------------------------------------
# config validation / state construction


def _expect(cond, msg):
    if not cond:
        raise ConfigError(msg)


def build_initial_state(spec: dict) -> AccessoryState:
    _expect(isinstance(spec, dict) and "kind" in spec, "initial: need an object with 'kind'")
    kind = spec["kind"]
    if kind == "half_plane":
        return half_plane_state()
    if kind == "rectangle":
        return rectangle_state(
            float(spec.get("width", 2.0)), float(spec.get("height", 1.0))
        )
    if kind == "state":
        _expect("state" in spec, "initial: kind 'state' needs a 'state' object")
        return AccessoryState.from_dict(spec["state"])
    raise ConfigError("initial: unknown kind %r" % kind)


def _inward_normal(state: AccessoryState, bracket, quad_tol) -> complex:
    f0 = scmap.sc_map(state, bracket[0], quad_tol)
    f1 = scmap.sc_map(state, bracket[1], quad_tol)
    chord = f1 - f0
    return 1j * chord / abs(chord)


def build_stage(state: AccessoryState, stage: dict, quad_tol: float):
    """SlitGroups + SlitPlan for one stage on the current state."""
    _expect(isinstance(stage, dict), "stage: must be an object")
    relation = stage.get("velocity_relation", "constant_ratio")
    _expect(
        relation == "constant_ratio",
        "stage: velocity_relation %r is reserved but not supported" % relation,
    )
    slit_specs = stage.get("slits")
    _expect(isinstance(slit_specs, list) and slit_specs, "stage: needs a nonempty 'slits' list")
    _expect("target_length" in stage, "stage: needs 'target_length'")

    fixed = list(state.fixed_prevertices)
    vmap = list(state.fixed_vertex_map)
    groups = []
    ratios = []
    for j, sl in enumerate(slit_specs):
        _expect(isinstance(sl, dict), "slit %d: must be an object" % j)
        ratio = float(sl.get("ratio", 1.0))
        _expect(ratio > 0.0, "slit %d: ratio must be positive" % j)
        ratios.append(ratio)
        vertex_index = sl.get("base_vertex_index")
        if vertex_index is not None:
            vertex_index = int(vertex_index)
            _expect(
                0 <= vertex_index < state.polygon.n - 3,
                "slit %d: base_vertex_index out of range" % j,
            )
            _expect(
                vertex_index in vmap,
                "slit %d: vertex %d is not available" % (j, vertex_index),
            )
            k = vmap.index(vertex_index)
            lam0 = fixed.pop(k)
            vmap.pop(k)
            base_point = state.polygon.vertices[vertex_index]
            alpha_k = state.polygon.alphas[vertex_index]
            _expect(
                "direction" in sl,
                "slit %d: vertex-based slits need an explicit direction" % j,
            )
            default_s = 0.5 * (alpha_k - 2.0)
            s1, s2 = sl.get("exponents", (default_s, default_s))
            _expect(
                abs(s1 + s2 - (alpha_k - 2.0)) < 1e-9,
                "slit %d: exponents must sum to alpha_k - 2" % j,
            )
        else:
            _expect("base_point" in sl, "slit %d: needs base_point or base_vertex_index" % j)
            bp = sl["base_point"]
            base_point = complex(float(bp[0]), float(bp[1]))
            s1, s2 = sl.get("exponents", (-0.5, -0.5))
            _expect(
                abs(s1 + s2 + 1.0) < 1e-9,
                "slit %d: side-based exponents must sum to -1" % j,
            )
            lam0 = sl.get("base_prevertex")
            bracket = None
            if lam0 is None:
                bracket = bracket_for_boundary_point(state, base_point, quad_tol)
                lam0 = locate_prevertex(state, base_point, bracket, quad_tol=quad_tol)
            lam0 = float(lam0)
        _expect(
            lam0 < 0.0,
            "slit %d: base prevertex %g is not negative; slit bases on the "
            "sides through prevertices 0 and 1 are not supported" % (j, lam0),
        )
        if "direction" in sl:
            d = sl["direction"]
            direction = complex(float(d[0]), float(d[1]))
        else:
            bracket = bracket_for_boundary_point(state, base_point, quad_tol)
            direction = _inward_normal(state, bracket, quad_tol)
        groups.append(
            SlitGroup(
                a1=lam0,
                lam=lam0,
                a2=lam0,
                sigma1=float(s1),
                sigma2=float(s2),
                base_point=base_point,
                direction=direction,
                vertex_index=vertex_index,
            )
        )
    lam_values = [g.lam for g in groups]
    _expect(len(set(lam_values)) == len(lam_values), "stage: slit base prevertices must be distinct")
    order = np.argsort(lam_values)
    groups = [groups[i] for i in order]
    ratios = [ratios[i] for i in order]
    plan = SlitPlan(
        ratios=tuple(ratios),
        target_length=float(stage["target_length"]),
        epsilon=float(stage.get("epsilon", 1e-12)),
        merge_tol=float(stage.get("merge_tol", 1e-9)),
        cluster_tol=float(stage.get("cluster_tol", 1e-4)),
    )
    seeded = AccessoryState(
        t=0.0,
        c=state.c,
        fixed_prevertices=tuple(fixed),
        slits=tuple(groups),
        polygon=state.polygon,
        fixed_vertex_map=tuple(vmap),
    )
    return seeded, plan


# ---------------------------------------------------------------------------
# artifact writers


def _params_payload(state: AccessoryState, merge_info=None) -> dict:
    tab = state.prevertices
    entries = []
    for x, e, kind in zip(tab.x, tab.e, tab.kind):
        entries.append({"x": float(x), "exponent": float(e), "kind": str(kind)})
    payload = {
        "t": state.t,
        "c": [state.c.real, state.c.imag],
        "abs_c": abs(state.c),
        "arg_c": float(np.angle(complex(state.c))),
        "alpha_inf": state.polygon.alpha_inf,
        "prevertices": entries,
        "state": state.to_dict(),
    }
    if merge_info is not None:
        payload["merge"] = merge_info
    return payload


def _write_trace_csv(path: Path, trace, m: int):
    final = trace.final
    nf = len(final.fixed_prevertices)
    cols = ["t", "h", "err", "min_gap", "abs_c", "arg_c"]
    cols += ["a_%d" % (k + 1) for k in range(nf)]
    for i in range(m):
        cols += ["a_%d1" % (i + 1), "lam_%d" % (i + 1), "a_%d2" % (i + 1)]
    cols += ["L_%d" % (i + 1) for i in range(m)]
    cols += ["C_%d" % (i + 1) for i in range(m)] + ["scale"]
    lines = [",".join(cols)]
    for st, diag in zip(trace.snapshots, trace.diagnostics):
        row = [
            _fmt(diag.get("t", st.t)),
            _fmt(diag.get("h", 0.0)),
            _fmt(diag.get("err", 0.0)),
            _fmt(diag.get("min_gap", st.min_gap())),
            _fmt(abs(st.c)),
            _fmt(float(np.angle(complex(st.c)))),
        ]
        row += [_fmt(a) for a in st.fixed_prevertices]
        for s in st.slits:
            row += [_fmt(s.a1), _fmt(s.lam), _fmt(s.a2)]
        lengths = diag.get("lengths") or (float("nan"),) * m
        row += [_fmt(v) for v in lengths]
        control = diag.get("control") or (float("nan"),) * m
        row += [_fmt(v) for v in control]
        row.append(_fmt(diag.get("scale", float("nan"))))
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def _write_grid(out: Path, gi, stem: str):
    rows = ["line,tag,re,im"]
    for idx, (tag, pts) in enumerate(gi.polylines):
        for p in pts:
            rows.append("%d,%s,%s,%s" % (idx, tag, _fmt(p.real), _fmt(p.imag)))
    (out / ("%s.csv" % stem)).write_text("\n".join(rows) + "\n")
    (out / ("%s.svg" % stem)).write_text(polylines_to_svg(gi.polylines))


def _print_table(state: AccessoryState, stage_idx: int):
    print("stage %d final parameters (t = %.7f):" % (stage_idx + 1, state.t))
    tab = state.prevertices
    for x, e, kind in zip(tab.x, tab.e, tab.kind):
        if kind in ("origin", "unit"):
            continue
        print("  %-6s  % .7f   (exponent %+.4f)" % (kind, x, e))
    print("  %-6s  % .7f   (arg %+.7f)" % ("|c|", abs(state.c), float(np.angle(complex(state.c)))))


def _verify_payload(trace, plan, rng_seed=20240801) -> dict:
    rep = verify_trace(trace, ratios=plan.ratios)
    payload = rep.to_dict()
    rng = np.random.default_rng(rng_seed)
    gaps = []
    for k in range(0, len(trace.snapshots), max(1, len(trace.snapshots) // 8)):
        st = trace.snapshots[k]
        if any(s.degenerate for s in st.slits) or st.min_gap() < 1e-9:
            continue
        C = control_coefficients(st, plan)
        Ct = rescale_for_length_param(C, st)
        z = rng.uniform(-15.0, 5.0, 5) + 1j * rng.uniform(0.5, 3.0, 5)
        gaps.append(evolution_identity_residual(st, Ct, z))
    payload["identity_residual"] = max(gaps) if gaps else 0.0
    payload["stop_reason"] = trace.stop_reason
    return payload


# ---------------------------------------------------------------------------
# runner


def run(config: dict, out_dir, outputs=()) -> int:
    """Execute a scenario; writes artifacts into out_dir; returns exit code."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = set(outputs) | set(config.get("outputs", ()))
    tols = config.get("tolerances", {})
    ode_tol = float(tols.get("ode_tol", 1e-10))
    quad_tol = float(tols.get("quad_tol", 1e-11))

    state = build_initial_state(config.get("initial", {"kind": "half_plane"}))
    stages = config.get("stages", [])
    _expect(isinstance(stages, list), "stages: must be a list")

    merge_info = None
    trace = None
    plan = None
    for k, stage in enumerate(stages):
        seeded, plan = build_stage(state, stage, quad_tol)
        trace = _evolve(seeded, plan, ode_tol=ode_tol, quad_tol=quad_tol)
        if "trace" in outputs:
            _write_trace_csv(out / ("trace_stage%d.csv" % (k + 1)), trace, seeded.m)
        if "verify" in outputs:
            payload = _verify_payload(trace, plan)
            (out / ("verify_stage%d.json" % (k + 1))).write_text(
                json.dumps(payload, indent=2, sort_keys=True) + "\n"
            )
        result = merge_degenerate(trace.final, plan, quad_tol=max(quad_tol, 1e-10))
        merge_info = {
            "clusters": result.clusters,
            "merged": result.merged,
            "warning": result.warning,
            "alternative": result.alternative,
            "stop_reason": trace.stop_reason,
            "degeneracy_report": trace.degeneracy_report,
        }
        if stage.get("merge", True) and result.clusters:
            state = result.state
        else:
            state = flatten_to_polygon(trace.final, quad_tol=max(quad_tol, 1e-10))
        if "table" in outputs:
            _print_table(state, k)
    if not stages and "table" in outputs:
        _print_table(state, -1)

    (out / "params.json").write_text(
        json.dumps(_params_payload(state, merge_info), indent=2, sort_keys=True) + "\n"
    )
    if "grid" in outputs:
        g = config.get("grid")
        if g is None:
            xs = state.prevertices.x
            g = {
                "x_min": float(xs.min() - 1.0),
                "x_max": float(xs.max() + 1.0),
                "y_min": 0.05,
                "y_max": 3.0,
            }
        spec = GridSpec(
            x_min=float(g["x_min"]),
            x_max=float(g["x_max"]),
            y_min=float(g["y_min"]),
            y_max=float(g["y_max"]),
            spacing=float(g.get("spacing", 0.5)),
            samples_per_line=int(g.get("samples_per_line", 120)),
        )
        gi = grid_image(state, spec, quad_tol=max(quad_tol, 1e-9))
        _write_grid(out, gi, "grid")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="scslit",
        description="Accessory parameters of half-plane maps onto polygons with growing slits",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    solve = sub.add_parser("solve", help="run a scenario")
    solve.add_argument("config", nargs="?", help="scenario JSON file")
    solve.add_argument("--preset", choices=sorted(PRESETS), help="built-in scenario")
    solve.add_argument("--out", default=".", help="output directory")
    solve.add_argument("--table", action="store_true", help="print parameter tables")
    solve.add_argument("--trace", action="store_true", help="write trace CSV")
    solve.add_argument("--grid", action="store_true", help="write grid image CSV/SVG")
    solve.add_argument("--verify", action="store_true", help="write verification report")
    args = parser.parse_args(argv)

    try:
        if args.preset:
            config = PRESETS[args.preset]
        elif args.config:
            config = json.loads(Path(args.config).read_text())
        else:
            raise ConfigError("need a config file or --preset")
        outputs = set()
        for name in ("table", "trace", "grid", "verify"):
            if getattr(args, name):
                outputs.add(name)
        return run(config, args.out, outputs)
    except (ConfigError, json.JSONDecodeError, OSError) as exc:
        report = {"error": type(exc).__name__, "message": str(exc)}
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "error.json").write_text(json.dumps(report, indent=2) + "\n")
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except ScslitError as exc:
        report = {"error": type(exc).__name__, "message": str(exc)}
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        last = getattr(exc, "last_state", None)
        if isinstance(last, AccessoryState):
            report["last_state"] = last.to_dict()
        (out / "error.json").write_text(json.dumps(report, indent=2) + "\n")
        print("numerical failure: %s" % exc, file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
