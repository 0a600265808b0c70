"""Command-line experiment runner.

Every subcommand reads its parameters from a flat key/value
configuration (``--config FILE`` plus ``--set key=value`` overrides) and
the global flags, and writes a JSON report or a CSV table to ``--out``
(stdout when omitted).  Exit status is 0 when the experiment passes, 1
when it fails with a valid report, and 2 on configuration errors.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import concentration as conc
from . import entropy as ent
from . import pointsets as ps
from . import sandwich as sw
from .errors import SampDiscError
from .spaces import FrequencySet, Grid, TrigPoly, frequency_range, hyperbolic_cross, required_points

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


GLOBAL_KEYS = {"seed", "threads", "grid_m", "grid_refine"}


class ConfigError(Exception):
    pass


# configuration ----------------------------------------------------------------

class Config:
    """Flat string map with typed getters; unknown keys are reported."""

    def __init__(self, values: dict):
        self.values = dict(values)
        self.used = set()

    def _raw(self, key, default):
        self.used.add(key)
        v = self.values.get(key)
        return default if v is None or v == "" else v

    def text(self, key, default=None):
        v = self._raw(key, default)
        return None if v is None else str(v)

    def integer(self, key, default=None):
        v = self._raw(key, default)
        if v is None:
            return None
        try:
            return int(v)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected an integer, got {v!r}")

    def number(self, key, default=None):
        v = self._raw(key, default)
        if v is None:
            return None
        try:
            return float(v)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected a number, got {v!r}")

    def flag(self, key, default=False):
        v = self._raw(key, default)
        if isinstance(v, bool):
            return v
        s = str(v).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {v!r}")

    def integers(self, key, default=None):
        v = self._raw(key, default)
        if v is None:
            return None
        if isinstance(v, (list, tuple)):
            return [int(x) for x in v]
        try:
            return [int(x) for x in str(v).replace(";", ",").split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"{key}: expected a comma-separated list of integers, got {v!r}")

    def numbers(self, key, default=None):
        v = self._raw(key, default)
        if v is None:
            return None
        if isinstance(v, (list, tuple)):
            return [float(x) for x in v]
        try:
            return [float(x) for x in str(v).replace(";", ",").split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"{key}: expected a comma-separated list of numbers, got {v!r}")

    def unused(self):
        return sorted(set(self.values) - self.used - GLOBAL_KEYS)


def read_config_file(path) -> dict:
    """``key = value`` lines; an optional ``[section]`` header is ignored."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string("[__top__]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}")
    out = {}
    for section in parser.sections():
        out.update(parser[section])
    return out


def parse_overrides(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def build_config(args) -> Config:
    values = {}
    if args.config:
        try:
            values.update(read_config_file(args.config))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}")
    values.update(parse_overrides(args.set))
    for key in sorted(GLOBAL_KEYS):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return Config(values)


# shared builders -----------------------------------------------------------

def space_from(cfg: Config) -> FrequencySet:
    kind = cfg.text("space", "range")
    if kind == "range":
        n, d = cfg.integer("n", 8), cfg.integer("d", 1)
        if n is None or n < 0 or d < 1:
            raise ConfigError("range space needs n >= 0 and d >= 1")
        return frequency_range(n, d)
    if kind in ("hyperbolic", "hc"):
        n, d = cfg.integer("n", 2), cfg.integer("d", 2)
        if n < 0 or d < 1:
            raise ConfigError("hyperbolic cross needs n >= 0 and d >= 1")
        return hyperbolic_cross(d, n)
    if kind == "file":
        path = cfg.text("freqs")
        if not path:
            raise ConfigError("space=file needs freqs=<path>")
        try:
            return FrequencySet.load(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load frequencies: {exc}")
    raise ConfigError(f"unknown space kind {kind!r} (range, hyperbolic, file)")


def grid_from(cfg: Config, space: FrequencySet, q: float) -> Grid:
    M = cfg.integer("grid_m")
    if M is None:
        M = required_points(space.max_degree, q)
    if M < 1:
        raise ConfigError("grid_m must be >= 1")
    g = Grid(space.dim, M)
    for _ in range(cfg.integer("grid_refine", 0)):
        g = g.refined()
    return g


def target_from(cfg: Config):
    t = cfg.numbers("target", [0.5, 1.5])
    if len(t) != 2 or not 0 <= t[0] <= t[1]:
        raise ConfigError("target must be 'lo,hi' with 0 <= lo <= hi")
    return (t[0], t[1])


def seed_from(cfg: Config) -> int:
    s = cfg.integer("seed")
    if s is None:
        raise ConfigError("this subcommand is randomized: --seed is required")
    if s < 0:
        raise ConfigError("seed must be nonnegative")
    return s


def q_from(cfg: Config, default=2.0) -> float:
    q = cfg.number("q", default)
    if not q >= 1 or not math.isfinite(q):
        raise ConfigError("q must be a finite number >= 1")
    return q


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return f"{v:.17g}"
    return v


def _space_info(space: FrequencySet) -> dict:
    return {"d": space.dim, "N": len(space), "max_degree": space.max_degree}


# subcommands -----------------------------------------------------------------

def cmd_certify(cfg: Config):
    """Point set: ``points`` = equispaced | uniform | <path>; ``m`` for the first two."""
    space = space_from(cfg)
    q = q_from(cfg)
    target = target_from(cfg)
    kind = cfg.text("points", "equispaced")
    seed = None
    if kind == "equispaced":
        m = cfg.integer("m", (2 * space.max_degree + 1) ** space.dim)
        if m < 1:
            raise ConfigError("m must be >= 1")
        if space.dim > 1:
            side = round(m ** (1.0 / space.dim))
            if side ** space.dim != m:
                raise ConfigError(f"equispaced m={m} is not a perfect {space.dim}-th power")
            m = side
        xi = ps.equispaced(m, space.dim)
    elif kind == "uniform":
        seed = seed_from(cfg)
        m = cfg.integer("m")
        if m is None or m < 1:
            raise ConfigError("uniform points need m >= 1")
        xi = ps.sample_uniform(m, space.dim, ps.derive_seed(seed))
    else:
        try:
            xi = ps.PointSet.load(kind)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load point set: {exc}")
        if xi.dim != space.dim:
            raise ConfigError("point set dimension does not match the space")
    if q == 2:
        rep = ps.certify_q2(space, xi, target)
    else:
        seed = seed_from(cfg) if seed is None else seed
        rep = ps.bracket_general_q(space, xi, q, cfg.integer("trials", 256), seed, grid_from(cfg, space, q),
                                   cfg.integer("optimizer_steps", 200), cfg.integer("starts", 32), target)
    out = rep.to_dict()
    out.update(space=_space_info(space), points=kind, subcommand="certify",
               paper_ref="Marcinkiewicz-type discretization constants of an equal-weight sampling rule")
    return _json(out), rep.passed, None


def cmd_search(cfg: Config):
    """Random restarts until ``m`` uniform points reach ``target``; writes the point set."""
    space = space_from(cfg)
    q = q_from(cfg)
    target = target_from(cfg)
    seed = seed_from(cfg)
    m = cfg.integer("m")
    if m is None or m < 1:
        raise ConfigError("search needs m >= 1")
    restarts = cfg.integer("restarts", 10)
    if restarts < 1:
        raise ConfigError("restarts must be >= 1")
    grid = None if q == 2 else grid_from(cfg, space, q)
    xi, rep = ps.search_pointset(space, q, m, target, restarts, seed, grid, cfg.integer("trials", 256),
                                 cfg.integer("optimizer_steps", 200), cfg.integer("starts", 32),
                                 cfg.integer("threads", 1))
    out = rep.to_dict()
    pts_path = cfg.text("pointset_out")
    out.update(space=_space_info(space), subcommand="search", pointset_out=pts_path,
               paper_ref="randomized existence of good point sets for L_q discretization")
    return _json(out), rep.passed, (pts_path, xi.to_text()) if pts_path else None


def cmd_scaling(cfg: Config):
    """Smallest scheduled m per hyperbolic-cross level ``n``."""
    d = cfg.integer("d", 2)
    ns = cfg.integers("ns", [1, 2, 3])
    q = q_from(cfg)
    target = target_from(cfg)
    seed = seed_from(cfg)
    restarts = cfg.integer("restarts", 10)
    fixed_m = cfg.integer("grid_m")
    refine = cfg.integer("grid_refine", 0)

    def grid_for(space, qq):
        g = Grid(space.dim, fixed_m if fixed_m else required_points(space.max_degree, qq))
        for _ in range(refine):
            g = g.refined()
        return g

    budget = cfg.text("schedule", "geometric")
    if budget == "geometric":
        schedule = ps.default_schedule
    elif budget == "n3":
        schedule = lambda n, N: [int(math.ceil(N * n ** 3))]
    else:
        raise ConfigError("schedule must be 'geometric' or 'n3'")
    rows = ps.scaling_study(d, ns, q, target, schedule, seed, restarts,
                            None if q == 2 else grid_for, cfg.integer("trials", 256),
                            cfg.integer("optimizer_steps", 200), cfg.integer("starts", 32))
    ok = all(r.complete for r in rows)
    return _csv(ps.SCALING_COLUMNS, [r.as_dict() for r in rows]), ok, None


ENTROPY_COLUMNS = ent.BRACKET_COLUMNS + ("resolution_limited", "tail_bound", "log_cover_bound_at_upper", "fitted_B",
                                         "definition")
# centers restricted to the ball; with free centers eps_k can be smaller by at most a factor 2
ENTROPY_DEFINITION = "centers_in_ball;free_centers_within_factor_2"


def cmd_entropy(cfg: Config):
    """Entropy-number brackets of the surrogate unit ball for ``k = 1..kmax``."""
    space = space_from(cfg)
    q = q_from(cfg)
    seed = seed_from(cfg)
    grid = grid_from(cfg, space, q)
    ball = ent.BallSampler(space, q, grid, size=cfg.integer("surrogate_size", 10_000), seed=seed,
                           field=cfg.text("field", "complex"), kind=cfg.text("kind", "auto"),
                           probes=cfg.integer("probes", 256))
    kmax = cfg.integer("kmax", max(len(space), 10))
    if kmax < 1:
        raise ConfigError("kmax must be >= 1")
    brackets = [ent.entropy_number_bracket(ball, k) for k in range(1, kmax + 1)]
    B_fit = ent.fit_entropy_bound(ball, brackets=brackets)
    B = cfg.number("B", max(1.0, B_fit))
    N = len(space)
    rows = []
    for b in brackets:
        r = b.as_row()
        r["resolution_limited"] = b.resolution_limited
        r["tail_bound"] = ent.entropy_tail(b.k, N, B)
        r["log_cover_bound_at_upper"] = ent.entropy_formula(b.upper, N, B, q) if b.upper > 0 else None
        r["fitted_B"] = B_fit
        r["definition"] = ENTROPY_DEFINITION
        rows.append(r)
    return _csv(ENTROPY_COLUMNS, rows), True, None


def cmd_sandwich(cfg: Config):
    """Ladder, decomposition check, union-bound budget and sampled-norm check."""
    space = space_from(cfg)
    q = q_from(cfg, 1.0)
    seed = seed_from(cfg)
    grid = grid_from(cfg, space, q)
    delta = cfg.number("delta", 0.125)
    a = cfg.number("a")
    j0 = cfg.integer("j0")
    if a is None or j0 is None:
        choice = sw.choose_parameters(q, delta)
        a = choice.a if a is None else a
        j0 = choice.j0 if j0 is None else j0
    B = cfg.number("B", 1.0)
    draws = cfg.integer("draws", 200)
    pointsets = cfg.integer("pointsets", 20)
    batch = sw.half_norm_batch(space, q, draws, ps.sub_seed(seed, 0), grid)
    ball = sw.sandwich_ball(space, q, grid, batch, size=cfg.integer("surrogate_size", 10_000),
                            seed=ps.sub_seed(seed, 1), probes=cfg.integer("probes", 0))
    ladder = sw.build_ladder(ball, a, j0, B, allow_coarse=cfg.flag("allow_coarse", True))
    budget = conc.ladder_budget(ladder, C=cfg.number("C", 1.0))
    m = cfg.integer("m", budget.m_star)
    viol, partition, slack = 0, True, 0.0
    decs = []
    for c in batch:
        f = TrigPoly(space, c)
        dec = sw.decompose(f, ladder)
        chk = sw.check_sandwich(f, dec, ladder)
        viol += chk.violations
        partition &= chk.partition_ok
        slack = max(slack, chk.max_slack)
        decs.append(dec)
    premise = conclusion = 0
    ident = 0.0
    for s in range(pointsets):
        xi = ps.sample_grid(grid, m, ps.derive_seed(seed, 2, s))
        for c, dec in zip(batch, decs):
            r = sw.sampled_norm_check(TrigPoly(space, c), xi, ladder, delta, dec=dec)
            ident = max(ident, r.identity_error)
            if r.premise_holds:
                premise += 1
                conclusion += bool(r.conclusion_holds)
    lo, hi = sw.sampled_norm_bounds(0.5, delta, a, j0, q)
    ok = viol == 0 and partition and conclusion == premise and ident <= 1e-12
    out = {
        "subcommand": "sandwich", "space": _space_info(space), "q": q, "a": a, "j0": j0,
        "J": ladder.J, "B": B, "m_star": budget.m_star, "m_used": m,
        "theorem_budget": budget.theorem_budget, "draws": draws, "pointsets": pointsets,
        "violations": viol, "partition_ok": bool(partition), "max_slack": slack,
        "premise_holds": premise, "conclusion_holds": conclusion, "identity_error": ident,
        "sampled_norm_bounds": [lo, hi], "delta": delta, "seed": seed, "pass": bool(ok),
        "ladder": ladder.metadata(), "budget": budget.to_dict(),
        "paper_ref": "sandwich decomposition by a ladder of nets with a union-bound sample budget",
    }
    return _json(out), ok, None


def cmd_concentration(cfg: Config):
    """Monte Carlo tail sweep against the Bernstein-type bound plus union-bound rows."""
    seed = seed_from(cfg)
    ms = cfg.integers("ms", [100, 1000, 10_000])
    etas = cfg.numbers("etas", [0.1, 0.2, 0.3])
    trials = cfg.integer("trials", 100_000)
    M = cfg.number("M", 1.0)
    if trials < 1 or any(m < 1 for m in ms):
        raise ConfigError("trials and every m must be >= 1")
    if any(not 0 < e < 1 for e in etas):
        raise ConfigError("every eta must lie in (0, 1)")
    fams = [conc.bernoulli_family(M, cfg.number("p", 0.5)), conc.uniform_family(M)]
    rows = conc.tail_sweep(fams, ms, etas, trials, seed)
    text = conc.sweep_csv(rows)
    ok = all(r.passed for r in rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for entry in (cfg.text("union_families", "1:1:0.125")).split(";"):
        try:
            card, Mj, eta = entry.split(":")
            fam = conc.UnionFamily(int(card), float(Mj), float(eta))
        except (ValueError, SampDiscError) as exc:
            raise ConfigError(f"union_families entry {entry!r}: expected card:M:eta ({exc})")
        m_star = conc.union_bound_m([fam])
        bound = 2.0 * fam.cardinality * math.exp(-m_star * fam.tolerance ** 2 / (8.0 * fam.sup_bound))
        w.writerow([m_star, f"{fam.tolerance:g}", f"{fam.sup_bound:g}", f"union_bound(card={card})",
                    "", f"{bound:.17g}", str(bound < 1).lower()])
    return text + buf.getvalue(), ok, None


COMMANDS = {
    "certify": (cmd_certify, "certify a point set (JSON report)",
                "keys: space=range|hyperbolic|file, n, d, freqs, q, points=equispaced|uniform|<path>, m, "
                "target=lo,hi, trials, optimizer_steps, starts"),
    "search": (cmd_search, "randomized point-set search (JSON report + point-set file)",
               "keys: space, n, d, q, m, target, restarts, trials, optimizer_steps, starts, pointset_out"),
    "entropy": (cmd_entropy, "entropy-number brackets (CSV)",
                "CSV columns: " + ", ".join(ENTROPY_COLUMNS) +
                ". keys: space, n, d, q, surrogate_size, field, kind, probes, kmax, B"),
    "sandwich": (cmd_sandwich, "sandwich decomposition check and budget (JSON report)",
                 "keys: space, n, d, freqs, q, a, j0, delta, B, draws, pointsets, surrogate_size, "
                 "probes, m, C, allow_coarse"),
    "concentration": (cmd_concentration, "tail-bound sweep (CSV)",
                      "CSV columns: " + ", ".join(conc.SWEEP_COLUMNS) +
                      "; trailing union_bound rows give m* per family. keys: ms, etas, trials, M, p, "
                      "union_families=card:M:eta;..."),
    "scaling": (cmd_scaling, "point-count scaling study on hyperbolic crosses (CSV)",
                "CSV columns: " + ", ".join(ps.SCALING_COLUMNS) +
                ". keys: d, ns, q, target, restarts, schedule=geometric|n3, trials, optimizer_steps, starts"),
}


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed (required for randomized runs)")
    common.add_argument("--out", default=None, help="output path (default: stdout)")
    common.add_argument("--threads", type=int, default=None, help="worker cap")
    common.add_argument("--grid-m", dest="grid_m", type=int, default=None, help="grid points per axis")
    common.add_argument("--grid-refine", dest="grid_refine", type=int, default=None,
                        help="number of grid doublings")
    common.add_argument("--config", default=None, help="key = value configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration key (repeatable)")
    parser = argparse.ArgumentParser(prog="sampdisc", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, short, detail) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=short, description=f"{short}. {detail}")
    return parser


def main(argv: Optional[list] = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_PASS
    func = COMMANDS[args.command][0]
    try:
        cfg = build_config(args)
        text, ok, extra = func(cfg)
        left = cfg.unused()
        if left:
            raise ConfigError(f"unknown configuration keys: {', '.join(left)}")
    except ConfigError as exc:
        print(f"sampdisc {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SampDiscError as exc:
        print(f"sampdisc {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if extra is not None:
        Path(extra[0]).write_text(extra[1])
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_PASS if ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
