"""Command-line front end.

Every command turns its results into flat records, written as JSON lines (or
CSV with ``--format csv``) to ``--out``.  Dense curves go to CSV sidecar files
under ``--csv-dir``.  Exit status: 0 on success, 1 on a domain error, 2 on a
usage or configuration-syntax error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import dynamics, strips, tangency
from .config import Config, parse_config
from .errors import BykovError, ParseError, UnknownKey
from .sections import CylPoint, Section

COMMANDS = ("validate", "sweep", "tangency", "strips", "classify", "delta", "orbit",
            "fixedpoints", "bifurcate", "cover", "entropy", "escape")


class UsageError(Exception):
    pass


def _need(args, name):
    v = getattr(args, name)
    if v is None:
        flag = "lambda" if name == "lam" else name.replace("_", "-")
        raise UsageError(f"--{flag} is required for '{args.command}'")
    return v


def _range(args, default_hi=None, default_lo=None):
    hi = args.lambda_hi if args.lambda_hi is not None else default_hi
    lo = args.lambda_lo if args.lambda_lo is not None else default_lo
    if hi is None or lo is None:
        raise UsageError(f"--lambda-hi and --lambda-lo are required for '{args.command}'")
    if not 0 < lo < hi:
        raise UsageError("need 0 < --lambda-lo < --lambda-hi")
    return hi, lo


def _sidecar(args, name: str, text: str) -> None:
    if args.csv_dir is None:
        return
    d = Path(args.csv_dir)
    d.mkdir(parents=True, exist_ok=True)
    (d / name).write_text(text)


def _complex(z) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


# ---------------------------------------------------------------- commands


def cmd_validate(cfg: Config, args):
    m = cfg.model
    dc = m.dc
    rec = {"type": "validate", "delta": dc.delta, "K": dc.K, "delta_v": dc.delta_v, "delta_w": dc.delta_w}
    rec.update({k: cfg.values[k] for k in sorted(cfg.values)})
    return [rec]


def cmd_sweep(cfg: Config, args):
    hi, lo = _range(args)
    n = args.pulse
    rows, recs = [], []
    for lam in tangency.lambda_grid(hi, lo, args.ratio):
        lam = float(lam)
        cc = tangency.count_pulse_connections(lam, n, cfg.model, raise_on_tangent=False)
        recs.append({"type": "count", "pulse": n, "lambda": lam, "count": cc.count,
                     "truncated": cc.truncated, "pruned": cc.pruned})
        for p in sorted(cc.locations, key=lambda p: p.x):
            rows.append((lam, p.x, p.y))
    _sidecar(args, "connections.csv", _table(("lambda", "x_lift", "y"), rows))
    return recs


def cmd_tangency(cfg: Config, args):
    hi, lo = _range(args)
    events = tangency.find_tangencies(hi, lo, cfg.model, pulse=args.pulse, ratio=args.ratio, jobs=args.jobs)
    return [e.as_json() for e in events]


def cmd_strips(cfg: Config, args):
    n0 = _need(args, "strip")
    count = max(1, args.depth if args.depth is not None else 1)
    recs = []
    for n in range(n0, n0 + count):
        s = strips.horizontal_strip(n, cfg.model)
        rec = {"type": "strip", "n": n, "x_lo": s.window[0], "x_hi": s.window[1], "h": s.h, "m": s.m}
        xs = np.linspace(*s.window, 257)
        rows = list(zip(xs, s.u1(xs), s.u2(xs)))
        header = ["x", "lower", "upper"]
        if args.lam is not None:
            hs = strips.horseshoe_strip(n, args.lam, cfg.model)
            rec.update({"lambda": args.lam, "is_horseshoe": hs.is_horseshoe, "arch_max": hs.arch_max,
                        "arch_max_at": hs.arch_max_at})
            rows = list(zip(xs, s.u1(xs), s.u2(xs), hs.lower(xs), hs.upper(xs)))
            header += ["image_lower", "image_upper"]
        _sidecar(args, f"strip_{n}.csv", _table(header, rows))
        recs.append(rec)
    return recs


def cmd_classify(cfg: Config, args):
    n = _need(args, "strip")
    lam = _need(args, "lam")
    target = args.target if args.target is not None else n
    c = strips.classify_intersection(target, n, lam, cfg.model)
    return [{"type": "classify", "lambda": lam, "source": n, "target": target, "value": c.value.value,
             "components": c.components, "predicates": list(c.predicates),
             "intervals": [list(iv) for iv in c.intervals]}]


def cmd_delta(cfg: Config, args):
    a = _need(args, "strip")
    seed = args.lambda_hi if args.lambda_hi is not None else min(0.5, 0.9 * cfg.model.family.lambda_star)
    di = strips.delta_interval(a, seed, cfg.model)
    return [{"type": "delta", "a": di.a, "c": di.c, "d": di.d}]


def cmd_orbit(cfg: Config, args):
    lam = _need(args, "lam")
    p0 = CylPoint(Section.InV, _need(args, "x0"), _need(args, "y0"))
    rec = dynamics.iterate_orbit(p0, lam, cfg.model, max_iters=args.max_iters)
    out = []
    for t, (p, lab) in enumerate(zip(rec.points, rec.itinerary)):
        out.append({"type": "orbit_point", "t": t, "x": p.x, "y": p.y,
                    "strip": None if lab == dynamics.GAP else lab})
    out.append({"type": "orbit_end", "lambda": lam, "steps": len(rec.points) - 1,
                "termination": rec.termination.value,
                "consistent": dynamics.itinerary_consistent(rec, lam, cfg.model)})
    rows = [(t, p.x, p.y, "" if lab == dynamics.GAP else lab)
            for t, (p, lab) in enumerate(zip(rec.points, rec.itinerary))]
    _sidecar(args, "orbit.csv", _table(("t", "x", "y", "strip"), rows))
    return out


def cmd_fixedpoints(cfg: Config, args):
    lam = _need(args, "lam")
    m = args.branch if args.branch is not None else 1
    pts = dynamics.fixed_points(lam, m, cfg.model)
    return [{"type": "fixed_point", "m": m, "lambda": lam, "x": f.x, "y": f.y, "kind": f.type.value,
             "det": f.det, "multipliers": [_complex(u) for u in f.multipliers], "residual": f.residual}
            for f in sorted(pts, key=lambda f: f.x)]


def cmd_bifurcate(cfg: Config, args):
    m = args.branch if args.branch is not None else 1
    hi, lo = _range(args, default_hi=0.5, default_lo=dynamics.saddle_node_closed_form(m, cfg.model) * 0.5)
    events = dynamics.track_bifurcations(m, lo, hi, cfg.model)
    out = []
    for e in sorted(events, key=lambda e: (-e.lam, e.x)):
        rec = {"type": e.kind, "m": e.m, "lambda": e.lam, "x": e.x, "y": e.y, "det": e.det}
        if e.kind == "flip":
            stable = [o for o in e.detail.get("period2", []) if o["stable"]]
            rec["period2_stable_at"] = stable[0]["lambda"] if stable else None
        out.append(rec)
    return out


def cmd_cover(cfg: Config, args):
    lam = _need(args, "lam")
    n = args.strip if args.strip is not None else strips.min_regular_index(lam, cfg.model)
    rep = dynamics.covering_check((n, n + 1), lam, cfg.model)
    out = [{"type": "cover_pair", "lambda": lam, "source": p.source, "target": p.target, "kind": p.kind,
            "components": p.components, "ok": p.ok, "reason": p.reason} for p in rep.pairs]
    out.append({"type": "cover", "lambda": lam, "strips": list(rep.strips), "passed": rep.passed,
                "alphabet": rep.alphabet})
    return out


def cmd_entropy(cfg: Config, args):
    lam = _need(args, "lam")
    cap = args.depth if args.depth is not None else 4
    return [{"type": "entropy", "lambda": lam, "cap": cap,
             "value": dynamics.entropy_proxy(lam, cap, cfg.model, start=args.strip)}]


def cmd_escape(cfg: Config, args):
    lam = _need(args, "lam")
    frac = dynamics.escape_statistics(lam, args.max_iters, args.samples, args.seed, cfg.model, jobs=args.jobs)
    return [{"type": "escape", "lambda": lam, "t": t, "fraction": float(f)} for t, f in enumerate(frac)]


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


# ---------------------------------------------------------------- output


def _plain(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, (list, tuple)):
        return [_plain(u) for u in v]
    return v


def _table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_plain(v) for v in r])
    return buf.getvalue()


def render(records: list[dict], fmt: str) -> str:
    records = [{k: _plain(v) for k, v in r.items()} for r in records]
    if fmt == "jsonl":
        return "".join(json.dumps(r, separators=(", ", ": ")) + "\n" for r in records)
    keys: list[str] = []
    for r in records:
        keys.extend(k for k in r if k not in keys)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow({k: json.dumps(v) if isinstance(v, list) else v for k, v in r.items()})
    return buf.getvalue()


# ---------------------------------------------------------------- entry points


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bykov", description="Numerics for a Bykov heteroclinic network unfolding.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="key=value configuration file (defaults when omitted)")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--csv-dir", help="directory for CSV sidecar files")
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--lambda-hi", type=float)
    p.add_argument("--lambda-lo", type=float)
    p.add_argument("--ratio", type=float, default=0.98, help="geometric lambda grid ratio")
    p.add_argument("--strip", type=int)
    p.add_argument("--target", type=int, help="target strip for classify (default: --strip)")
    p.add_argument("--pulse", type=int, default=1)
    p.add_argument("--depth", type=int)
    p.add_argument("--branch", type=int, help="fixed-point branch index m")
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--x0", type=float)
    p.add_argument("--y0", type=float)
    return p


def run_command(command: str, config: Config, args: argparse.Namespace) -> list[dict]:
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    if not 0 < args.ratio < 1:
        raise UsageError("--ratio must lie in (0, 1)")
    return HANDLERS[command](config, args)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = parse_config(args.config)
        text = render(run_command(args.command, cfg, args), args.format)
    except (ParseError, UnknownKey, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (BykovError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0
