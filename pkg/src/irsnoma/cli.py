"""Seeded Monte-Carlo campaigns over schemes and one sweep axis.

    python -m irsnoma.cli --config cfg.json --sweep power_max_dbm=10,15,20,23 \
        --schemes NOMA_IRS,OMA_IRS --trials 50 --seed 1 --out runs/pmax

Writes results.csv (one row per trial, then one aggregate row per sweep value and
scheme), summary.json and cdf_sum_rate.dat (gnuplot columns).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import orchestrate
from .scenario import Scenario, make_rng, sample_channels, trial_streams

CSV_VERSION = 1
CSV_COLUMNS = ["sweep_value", "scheme", "trial", "seed", "sum_rate_bps", "ee_bpj",
               "inter_cell_interference_w", "iters_outer", "status", "wall_ms"]

# axis -> (parser of one value, scenario updater)
def _triple(v):
    parts = [float(x) for x in str(v).split(":")]
    if len(parts) != 3:
        raise ValueError(f"expected three ':'-separated numbers, got {v!r}")
    return tuple(parts)


def _set_irs(sc, pos):
    return sc.replace(irs_pos=np.asarray(pos, float))


def _set_user_y(sc, y):
    pos = sc.user_pos.copy()
    pos[:, 1] = y
    return sc.replace(user_pos=pos)


def _set_pathloss(sc, t):
    return sc.replace(a_bu=t[0], a_iu=t[1], a_bi=t[2])


AXES = {
    "power_max_dbm": (float, lambda sc, v: sc.replace(power_max=10.0 ** ((v - 30.0) / 10.0))),
    "num_elements": (int, lambda sc, v: sc.with_elements(v)),
    "user_y": (float, _set_user_y),
    "irs_pos": (_triple, _set_irs),
    "irs_y": (float, lambda sc, v: _set_irs(sc, (sc.irs_pos[0], v, sc.irs_pos[2]))),
    "irs_z": (float, lambda sc, v: _set_irs(sc, (sc.irs_pos[0], sc.irs_pos[1], v))),
    "pathloss": (_triple, _set_pathloss),
}


def _check_value(axis, v):
    nums = v if isinstance(v, tuple) else (v,)
    if not all(math.isfinite(x) for x in nums):
        raise ValueError(f"{axis} values must be finite")
    if axis == "num_elements" and v < 0:
        raise ValueError("num_elements must be nonnegative")
    if axis == "pathloss" and min(v) <= 0:
        raise ValueError("path-loss exponents must be positive")
    if axis == "power_max_dbm" and not -30.0 <= v <= 60.0:
        raise ValueError("power_max_dbm outside [-30, 60]")


def format_value(v) -> str:
    if isinstance(v, tuple):
        return ":".join(_fmt(x) for x in v)
    return _fmt(v)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


@dataclass
class Campaign:
    base: Scenario
    axis: str | None = None
    values: list = field(default_factory=lambda: [None])
    schemes: tuple = orchestrate.SCHEMES
    trials: int = 1
    seed: int = 0
    out: str | None = None
    workers: int = 1
    timing: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trial count must be at least 1")
        if self.axis is None:
            self.values = [None]
        else:
            if self.axis not in AXES:
                raise ValueError(f"unknown sweep axis {self.axis!r}; choose from {sorted(AXES)}")
            parse = AXES[self.axis][0]
            self.values = [parse(v) for v in self.values]
            for v in self.values:
                _check_value(self.axis, v)
        for s in self.schemes:
            if s not in orchestrate.ALL_SCHEMES:
                raise ValueError(f"unknown scheme {s!r}")

    def scenario_at(self, value) -> Scenario:
        if self.axis is None:
            return self.base
        return AXES[self.axis][1](self.base, value)


@dataclass
class Row:
    sweep_value: str
    scheme: str
    trial: int
    seed: int
    sum_rate_bps: float
    ee_bpj: float
    inter_cell_interference_w: float
    iters_outer: int
    status: str
    wall_ms: float


@dataclass
class Results:
    rows: list
    aggregates: list          # dicts per (sweep_value, scheme)

    def csv_text(self, timing=False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([r.sweep_value, r.scheme, r.trial, r.seed, _fmt(r.sum_rate_bps), _fmt(r.ee_bpj),
                        _fmt(r.inter_cell_interference_w), r.iters_outer, r.status,
                        f"{r.wall_ms:.3f}" if timing else ""])
        for a in self.aggregates:
            w.writerow([a["sweep_value"], a["scheme"], "mean", a["seed"], _fmt(a["sum_rate_bps"]["mean"]),
                        _fmt(a["ee_bpj"]["mean"]), _fmt(a["inter_cell_interference_w"]["mean"]),
                        _fmt(a["iters_outer"]["mean"]), f"aggregate:n={a['count']}:excluded={a['excluded']}", ""])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"csv_version": CSV_VERSION, "groups": self.aggregates}


def run_trial(args):
    """One (sweep value, trial) cell: same channel draw for every scheme."""
    camp, vi, trial = args
    value = camp.values[vi]
    sc = camp.scenario_at(value)
    ch_ss, alg_ss = trial_streams(camp.seed, trial)
    ch = sample_channels(sc, ch_ss)
    # one stream per scheme, keyed by its global position so it does not depend on the scheme list
    streams = alg_ss.spawn(len(orchestrate.ALL_SCHEMES))
    rows = []
    for scheme in camp.schemes:
        rng = make_rng(streams[orchestrate.ALL_SCHEMES.index(scheme)])
        rep = orchestrate.run_scheme(sc, ch, scheme, rng)
        rows.append(Row(format_value(value) if value is not None else "", scheme, trial, camp.seed,
                        rep.objective, rep.ee, rep.interference_w, rep.iterations, rep.status, rep.wall_ms))
    return vi, trial, rows


def _stats(x):
    x = np.asarray(x, float)
    if x.size == 0:
        return {"mean": float("nan"), "std": float("nan")}
    return {"mean": float(np.mean(x)), "std": float(np.std(x, ddof=1)) if x.size > 1 else 0.0}


def aggregate(rows, schemes, values, seed) -> list:
    out = []
    for v in values:
        key = format_value(v) if v is not None else ""
        for s in schemes:
            grp = [r for r in rows if r.sweep_value == key and r.scheme == s]
            ok = [r for r in grp if r.status == orchestrate.OK]
            out.append({
                "sweep_value": key, "scheme": s, "seed": seed, "count": len(ok),
                "excluded": len(grp) - len(ok),
                "sum_rate_bps": _stats([r.sum_rate_bps for r in ok]),
                "ee_bpj": _stats([r.ee_bpj for r in ok]),
                "inter_cell_interference_w": _stats([r.inter_cell_interference_w for r in ok]),
                "iters_outer": _stats([r.iters_outer for r in ok]),
            })
    return out


def run_campaign(c: Campaign, progress=None) -> Results:
    """Every (sweep value x trial) cell runs all schemes on one channel draw; output order
    is fixed by (sweep index, trial, scheme) regardless of worker scheduling."""
    jobs = [(c, vi, t) for vi in range(len(c.values)) for t in range(c.trials)]
    if c.workers > 1:
        with ProcessPoolExecutor(c.workers) as ex:
            done = list(ex.map(run_trial, jobs))
    else:
        done = []
        for j in jobs:
            done.append(run_trial(j))
            if progress:
                progress(len(done), len(jobs))
    done.sort(key=lambda d: (d[0], d[1]))
    rows = [r for _, _, rs in done for r in rs]
    res = Results(rows, aggregate(rows, c.schemes, c.values, c.seed))
    if c.out:
        write_outputs(res, c.out, c.timing)
    return res


def emit_cdf(reports, metric="sum_rate_bps"):
    """Sorted values with cumulative fractions i/n. Accepts numbers, dicts or objects."""
    vals = []
    for r in reports:
        if isinstance(r, (int, float, np.floating, np.integer)):
            vals.append(float(r))
        elif isinstance(r, dict):
            vals.append(float(r[metric]))
        else:
            vals.append(float(getattr(r, metric)))
    vals.sort()
    n = len(vals)
    return [(v, (i + 1) / n) for i, v in enumerate(vals)]


def gnuplot_columns(res: Results, metric="sum_rate_bps") -> str:
    """Blocks of '<value> <fraction>' per (sweep value, scheme), separated by two blank lines."""
    lines = []
    keys = []
    for r in res.rows:
        if (r.sweep_value, r.scheme) not in keys:
            keys.append((r.sweep_value, r.scheme))
    for sv, s in keys:
        grp = [r for r in res.rows if r.sweep_value == sv and r.scheme == s and r.status == orchestrate.OK]
        lines.append(f"# {s} sweep={sv or '-'} metric={metric}")
        lines += [f"{_fmt(v)} {_fmt(f)}" for v, f in emit_cdf(grp, metric)]
        lines += ["", ""]
    return "\n".join(lines)


def write_outputs(res: Results, out, timing=False):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(res.csv_text(timing))
    (out / "summary.json").write_text(json.dumps(res.summary(), indent=2, sort_keys=True) + "\n")
    (out / "cdf_sum_rate.dat").write_text(gnuplot_columns(res) + "\n")


# ----------------------------------------------------------------------------


def load_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def parse_sweep(text):
    if text is None:
        return None, [None]
    if "=" not in text:
        raise ValueError("--sweep expects AXIS=v1,v2,...")
    axis, vals = text.split("=", 1)
    return axis.strip(), [v.strip() for v in vals.split(",") if v.strip()]


def build_parser():
    ap = argparse.ArgumentParser(prog="irsnoma", description="Monte-Carlo campaigns for multi-cell IRS-aided NOMA.")
    ap.add_argument("--config", help="JSON scenario file (see README)")
    ap.add_argument("--sweep", help=f"AXIS=v1,v2,...; axes: {', '.join(sorted(AXES))}")
    ap.add_argument("--schemes", default=",".join(orchestrate.SCHEMES))
    ap.add_argument("--trials", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="irsnoma_out")
    ap.add_argument("--orders", choices=("sorted", "all"), help="decoding-order enumeration for exhaustive search")
    ap.add_argument("--elements", type=int, help="override the number of IRS elements M")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--timing", action="store_true", help="fill wall_ms (breaks byte-identical reruns)")
    ap.add_argument("--quiet", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.elements is not None:
            cfg["num_elements"] = args.elements
        if args.orders is not None:
            cfg["orders"] = args.orders
        base = Scenario.from_config(cfg)
        axis, values = parse_sweep(args.sweep)
        schemes = tuple(s.strip() for s in args.schemes.split(",") if s.strip())
        camp = Campaign(base, axis, values, schemes, args.trials, args.seed, args.out,
                        max(1, args.workers), args.timing)
    except (ValueError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    def progress(k, n):
        if not args.quiet:
            print(f"\r{k}/{n} cells", end="" if k < n else "\n", file=sys.stderr, flush=True)

    res = run_campaign(camp, progress)
    if not args.quiet:
        for a in res.aggregates:
            print(f"{a['sweep_value'] or '-':>14} {a['scheme']:<12} n={a['count']:<4} "
                  f"sum_rate={a['sum_rate_bps']['mean'] / 1e6:.4f} Mbit/s  ee={a['ee_bpj']['mean']:.4g} bit/J")
    return 0


if __name__ == "__main__":
    sys.exit(main())
