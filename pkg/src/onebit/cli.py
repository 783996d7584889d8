"""Command line runner for the analytic, simulation and mean-field experiments.

Every subcommand writes CSV (default) or JSON rows to ``--output`` or stdout.
Tables are additionally pretty-printed when the rows go to a file. Options
can also come from an INI file given with ``--config``: keys in ``[onebit]``
apply to every subcommand, keys in a section named after the subcommand
apply to that one, and command line flags win over both.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import analytic as an
from . import meanfield as mf
from . import published as pub
from . import sim_cluster as sc
from . import sim_single as ss
from .dist import DomainError, QuadratureError, get_distribution, get_prediction_model

SEED_ENV = "ONEBIT_SEED"
EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

COLUMNS = ("scenario", "lambda", "T", "policy", "source", "mean_sojourn", "ci95", "published", "rel_dev", "extra")

SCALES = {
    # single queue: horizon, replications; cluster: n, horizon, warmup, replications
    "desk": dict(horizon=2e5, reps=20, n=200, cluster_horizon=2e4, cluster_warmup=2e3, cluster_reps=10),
    "paper": dict(horizon=1e6, reps=100, n=1000, cluster_horizon=1e5, cluster_warmup=1e4, cluster_reps=100),
}

log = logging.getLogger("onebit")


class UsageError(Exception):
    pass


@dataclass
class ResultRow:
    scenario: str
    lam: float | None
    T: float | None
    policy: str
    source: str
    mean_sojourn: float
    ci95: float | None = None
    published: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def rel_dev(self) -> float | None:
        if self.published is None:
            return None
        return (self.mean_sojourn - self.published) / self.published

    def as_list(self):
        extra = ";".join(f"{k}={_fmt(v)}" for k, v in self.extra.items())
        return [
            self.scenario,
            _fmt(self.lam),
            _fmt(self.T),
            self.policy,
            self.source,
            _fmt(self.mean_sojourn),
            _fmt(self.ci95),
            _fmt(self.published),
            _fmt(self.rel_dev),
            extra,
        ]

    def as_dict(self):
        return dict(zip(COLUMNS, self.as_list()))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".10g")


# --- argument parsing --------------------------------------------------------


def float_list(text: str) -> list[float]:
    """``0.8,0.9`` or ``start:stop:count`` (inclusive linear grid)."""
    text = text.strip()
    if not text:
        raise argparse.ArgumentTypeError("empty grid")
    try:
        if ":" in text:
            a, b, k = text.split(":")
            k = int(k)
            if k < 1:
                raise ValueError
            return [float(v) for v in np.linspace(float(a), float(b), k)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from None


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 1
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with option defaults")
    common.add_argument("--output", "-o", help="write rows here instead of stdout")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--seed", type=int, help=f"base seed (default ${SEED_ENV} or 1)")
    common.add_argument("--scale", choices=tuple(SCALES), default="desk")
    common.add_argument("--reps", type=int, help="replications (default from --scale)")
    common.add_argument("--workers", type=int, default=1, help="worker processes for replications")
    common.add_argument("--verbose", "-v", action="store_true")

    parser = argparse.ArgumentParser(prog="onebit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", parents=[common], help="sojourn time against threshold")
    p.add_argument("--dist", default="exponential", choices=("exponential", "weibull"))
    p.add_argument("--lambdas", type=float_list, default=[0.8, 0.9, 0.95])
    p.add_argument("--thresholds", type=float_list, default=float_list("0.05:8:80"))
    p.add_argument("--advice", choices=("exact", "predicted", "both"), default="exact")
    p.add_argument("--model", default="exponential", help="prediction model for predicted advice")
    p.add_argument("--preempt", choices=("no", "yes", "both"), default="both")
    p.add_argument("--below-order", choices=an.BELOW_ORDERS, default="front")
    p.add_argument("--source", choices=("analytic", "simulation", "both"), default="analytic")
    p.add_argument("--horizon", type=float, help="simulation horizon (default from --scale)")

    for name, table in (("table1", 1), ("table2", 2)):
        p = sub.add_parser(name, parents=[common], help=f"reproduce result table {table}")
        p.add_argument("--lambdas", type=float_list, default=list(pub.TABLE_LAMBDAS))
        p.add_argument("--simulate", type=_bool, default=True, help="run the SRPT and SPRPT simulations")
        p.add_argument("--horizon", type=float)

    p = sub.add_parser("table3", parents=[common], help="reproduce the multi-queue table")
    p.add_argument("--simulate", type=_bool, default=True, help="run the cluster simulations")
    p.add_argument("--ode", type=_bool, default=True, help="integrate the mean-field equations")
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--n", type=int, help="queue count (default from --scale)")
    p.add_argument("--horizon", type=float)

    p = sub.add_parser("opt-threshold", parents=[common], help="optimal thresholds")
    p.add_argument("--dist", default="exponential", choices=("exponential", "weibull"))
    p.add_argument("--lambdas", type=float_list, default=[0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.98])
    p.add_argument("--advice", choices=("exact", "predicted"), default="exact")
    p.add_argument("--model", default="exponential")
    p.add_argument("--preempt", choices=("no", "yes", "both"), default="both")
    p.add_argument("--metric", choices=("s_total", "w_total"), default="s_total")

    p = sub.add_parser("meanfield", parents=[common], help="mean-field fixed point")
    _cluster_args(p)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--s-max", type=int, default=40)
    p.add_argument("--l-max", type=int, default=40)
    p.add_argument("--stop-tol", type=float, default=1e-10)
    p.add_argument("--paper-exact", action="store_true", help="dt 1e-5 over time 1e4, no early stop")
    p.add_argument("--export-state", help="write the fixed point as (s, l, c, x) CSV here")

    p = sub.add_parser("sim-cluster", parents=[common], help="multi-queue simulation")
    _cluster_args(p)
    p.add_argument("--policy", choices=sorted(sc.POLICIES), default="onebit")
    p.add_argument("--n", type=int)
    p.add_argument("--horizon", type=float)
    p.add_argument("--warmup", type=float)
    return parser


def _cluster_args(p):
    p.add_argument("--q1", type=float, default=0.0, help="chance a long job is labeled short")
    p.add_argument("--q2", type=float, default=0.0, help="chance a short job is labeled long")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--lambda1", type=float, default=0.225)
    p.add_argument("--lambda2", type=float, default=0.90)
    p.add_argument("--mean1", type=float, default=3.2)
    p.add_argument("--mean2", type=float, default=0.20)


def _subparser(parser, name):
    for action in parser._subparsers._group_actions:
        if name in action.choices:
            return action.choices[name]
    raise KeyError(name)


def apply_config_file(parser, argv, path) -> None:
    """Turn INI values into parser defaults so explicit flags still win."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise UsageError(f"cannot read config file {path}")
    command = next((a for a in argv if not a.startswith("-")), None)
    sub = _subparser(parser, command)
    actions = {a.dest: a for a in sub._actions}
    values = {}
    for section in ("onebit", command):
        if cp.has_section(section):
            values.update(cp.items(section))
    defaults = {}
    for key, raw in values.items():
        dest = key.replace("-", "_")
        action = actions.get(dest)
        if action is None or dest in ("config", "help"):
            raise UsageError(f"unknown option {key!r} in {path}")
        if action.const is True and action.nargs == 0:
            defaults[dest] = _bool(raw)
            continue
        conv = action.type or str
        try:
            val = conv(raw)
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"{path}: {key}: {exc}") from None
        if action.choices is not None and val not in action.choices:
            raise UsageError(f"{path}: {key} must be one of {sorted(action.choices)}")
        defaults[dest] = val
    sub.set_defaults(**defaults)


# --- subcommands -------------------------------------------------------------


def _preempt_flags(choice: str) -> list[bool]:
    return {"no": [False], "yes": [True], "both": [False, True]}[choice]


def _mode(preemptive: bool) -> str:
    return "preempt" if preemptive else "nonpreempt"


def _check_lambdas(lams):
    for lam in lams:
        if not 0.0 < lam < 1.0:
            raise UsageError(f"arrival rates must lie in (0, 1), got {lam}")


def _stats_row(scenario, lam, T, policy, source, st, published=None, **extra):
    return ResultRow(
        scenario, lam, T, policy, source, st.mean_sojourn, st.ci95_halfwidth, published,
        dict(rep_min=st.rep_min, rep_max=st.rep_max, reps=st.replications, **extra),
    )


def cmd_sweep(args) -> list[ResultRow]:
    _check_lambdas(args.lambdas)
    if not args.thresholds or any(not t >= 0 for t in args.thresholds):
        raise UsageError("threshold grid must be non-empty and nonnegative")
    dist = get_distribution(args.dist)
    model = get_prediction_model(args.model)
    advice = ["exact", "predicted"] if args.advice == "both" else [args.advice]
    scale = SCALES[args.scale]
    horizon = args.horizon or scale["horizon"]
    reps = args.reps or scale["reps"]
    rows = []
    for lam in args.lambdas:
        for adv in advice:
            for pre in _preempt_flags(args.preempt):
                m = None if adv == "exact" else model
                policy = f"threshold-{adv}-{_mode(pre)}"
                scenario = f"{dist.kind.lower()}-{adv}"
                for T in args.thresholds:
                    if args.source in ("analytic", "both"):
                        b = an.evaluate(an.PolicyConfig(dist, lam, T, pre, m, args.below_order))
                        rows.append(ResultRow(scenario, lam, T, policy, "analytic", b.s_total,
                                              extra=dict(class_fraction_below=b.class_fraction_below)))
                    if args.source in ("simulation", "both"):
                        cfg = ss.SimConfig(dist, lam, horizon=horizon, seed=args.seed)
                        pol = ss.SchedulingPolicy("threshold", T, pre, m, args.below_order)
                        st = ss.replicate(cfg, pol, reps=reps, workers=args.workers)
                        rows.append(_stats_row(scenario, lam, T, policy, "simulation", st))
    return rows


def table_rows(table: int, lams, simulate: bool, seed: int, horizon: float, reps: int, workers: int = 1):
    dist = get_distribution("exponential" if table == 1 else "weibull")
    model = get_prediction_model("exponential")
    rows = []
    for lam in lams:
        ref = pub.TABLE1.get(lam) if table == 1 else pub.TABLE2.get(lam)

        def published(col):
            return None if ref is None else ref[pub.TABLE_COLUMNS.index(col)]

        scenario = f"table{table}"
        rows.append(ResultRow(scenario, lam, None, "fifo", "analytic", an.fifo_sojourn(dist, lam), None,
                              published("fifo")))
        for adv, m in (("threshold", None), ("prediction", model)):
            for pre in (False, True):
                col = f"{adv}-{_mode(pre)}"
                o = an.optimal_threshold(an.PolicyConfig(dist, lam, 1.0, pre, m))
                rows.append(ResultRow(scenario, lam, o.T, col, "analytic", o.value, None, published(col)))
        if simulate:
            cfg = ss.SimConfig(dist, lam, horizon=horizon, seed=seed)
            for col, pol in (("srpt", ss.SRPT()), ("sprpt", ss.SPRPT(model))):
                st = ss.replicate(cfg, pol, reps=reps, workers=workers)
                rows.append(_stats_row(scenario, lam, None, col, "simulation", st, published(col)))
    return rows


def cmd_table(args, table: int) -> list[ResultRow]:
    _check_lambdas(args.lambdas)
    scale = SCALES[args.scale]
    return table_rows(table, args.lambdas, args.simulate, args.seed, args.horizon or scale["horizon"],
                      args.reps or scale["reps"], args.workers)


def _cluster_config(args, **over) -> sc.ClusterConfig:
    scale = SCALES[args.scale]
    horizon = getattr(args, "horizon", None) or scale["cluster_horizon"]
    warmup = getattr(args, "warmup", None)
    if warmup is None:
        warmup = 0.1 * horizon
    kw = dict(
        n=getattr(args, "n", None) or scale["n"],
        d=getattr(args, "d", 2),
        lambda1=getattr(args, "lambda1", 0.225),
        lambda2=getattr(args, "lambda2", 0.90),
        mean1=getattr(args, "mean1", 3.2),
        mean2=getattr(args, "mean2", 0.20),
        q1=getattr(args, "q1", 0.0),
        q2=getattr(args, "q2", 0.0),
        horizon=horizon,
        warmup=warmup,
        seed=args.seed,
    )
    kw.update(over)
    return sc.ClusterConfig(**kw)


def cmd_table3(args) -> list[ResultRow]:
    scale = SCALES[args.scale]
    reps = args.reps or scale["cluster_reps"]
    base = _cluster_config(args)
    rows = []
    if args.simulate:
        for policy, ref in pub.TABLE3_BASELINES.items():
            st = sc.replicate_cluster(base, policy, reps=reps, workers=args.workers)
            rows.append(_stats_row("table3", None, None, policy, "simulation", st, ref, n=base.n))
    for (q1, q2), (ref_sim, ref_ode) in pub.TABLE3_PREDICTIONS.items():
        cfg = base.with_errors(q1, q2)
        tag = f"onebit(q1={q1:g},q2={q2:g})"
        if args.simulate:
            st = sc.replicate_cluster(cfg, "onebit", reps=reps, workers=args.workers)
            rows.append(_stats_row("table3", None, None, tag, "simulation", st, ref_sim, n=base.n))
        if args.ode:
            fp = mf.solve(cfg, dt=args.dt)
            rows.append(ResultRow("table3", None, None, tag, "ode", fp.mean_sojourn, None, ref_ode,
                                  dict(residual=fp.residual, steps=fp.steps)))
    return rows


def cmd_opt_threshold(args) -> list[ResultRow]:
    _check_lambdas(args.lambdas)
    dist = get_distribution(args.dist)
    model = None if args.advice == "exact" else get_prediction_model(args.model)
    rows = []
    for lam in args.lambdas:
        for pre in _preempt_flags(args.preempt):
            o = an.optimal_threshold(an.PolicyConfig(dist, lam, 1.0, pre, model), metric=args.metric)
            extra = {}
            if model is None and dist.kind == "Exponential":
                root = an.exp_optimal_threshold_root(lam)
                extra = dict(root_T=root, gap=abs(o.T - root))
            rows.append(ResultRow(f"{dist.kind.lower()}-{args.advice}", lam, o.T,
                                  f"threshold-{args.advice}-{_mode(pre)}", "analytic", o.value, extra=extra))
    return rows


def write_state_csv(state: mf.MfState, path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "l", "c", "x"])
        for s, l, c, x in state.to_rows():
            w.writerow([s, l, c, _fmt(x)])


def cmd_meanfield(args) -> list[ResultRow]:
    cfg = _cluster_config(args)
    if args.paper_exact:
        fp = mf.solve(cfg, dt=1e-5, s_max=args.s_max, l_max=args.l_max, horizon=1e4, stop_tol=0.0)
    else:
        fp = mf.solve(cfg, dt=args.dt, s_max=args.s_max, l_max=args.l_max, stop_tol=args.stop_tol)
    if args.export_state:
        write_state_csv(fp.state, args.export_state)
    tag = f"onebit(q1={cfg.q1:g},q2={cfg.q2:g})"
    ref = pub.TABLE3_PREDICTIONS.get((cfg.q1, cfg.q2))
    default_system = (cfg.d, cfg.lambda1, cfg.lambda2, cfg.mean1, cfg.mean2) == (2, 0.225, 0.90, 3.2, 0.20)
    return [ResultRow("meanfield", None, None, tag, "ode", fp.mean_sojourn, None,
                      ref[1] if ref and default_system else None,
                      dict(residual=fp.residual, steps=fp.steps, truncation_flux=fp.truncation_flux,
                           s_max=fp.state.x.shape[0] - 1))]


def cmd_sim_cluster(args) -> list[ResultRow]:
    cfg = _cluster_config(args)
    reps = args.reps or SCALES[args.scale]["cluster_reps"]
    st = sc.replicate_cluster(cfg, args.policy, reps=reps, workers=args.workers)
    tag = args.policy if args.policy != "onebit" else f"onebit(q1={cfg.q1:g},q2={cfg.q2:g})"
    return [_stats_row("sim-cluster", None, None, tag, "simulation", st, n=cfg.n, mean_wait=st.mean_wait)]


COMMANDS = {
    "sweep": cmd_sweep,
    "table1": lambda a: cmd_table(a, 1),
    "table2": lambda a: cmd_table(a, 2),
    "table3": cmd_table3,
    "opt-threshold": cmd_opt_threshold,
    "meanfield": cmd_meanfield,
    "sim-cluster": cmd_sim_cluster,
}


# --- output ------------------------------------------------------------------


def render(rows: list[ResultRow], fmt: str) -> str:
    if fmt == "json":
        return json.dumps([r.as_dict() for r in rows], indent=1) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow(r.as_list())
    return buf.getvalue()


def pretty(rows: list[ResultRow]) -> str:
    head = f"{'lambda':>7} {'T':>8} {'policy':<34} {'source':<10} {'value':>9} {'ci95':>7} {'published':>9} {'dev':>7}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lam = f"{r.lam:.2f}" if r.lam is not None else ""
        T = f"{r.T:.4f}" if r.T is not None else ""
        ci = f"{r.ci95:.3f}" if r.ci95 is not None else ""
        ref = f"{r.published:.3f}" if r.published is not None else ""
        dev = f"{100 * r.rel_dev:+.2f}%" if r.rel_dev is not None else ""
        lines.append(f"{lam:>7} {T:>8} {r.policy:<34} {r.source:<10} {r.mean_sojourn:9.4f} {ci:>7} {ref:>9} {dev:>7}")
    return "\n".join(lines) + "\n"


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        pre, _ = parser.parse_known_args(argv)
        if pre.config:
            apply_config_file(parser, argv, pre.config)
        args = parser.parse_args(argv)
        if args.seed is None:
            args.seed = _default_seed()
        if args.reps is not None and args.reps < 2:
            raise UsageError("--reps must be at least 2")
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"onebit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        rows = COMMANDS[args.command](args)
    except (UsageError, DomainError) as exc:
        print(f"onebit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (an.InstabilityError, an.SearchError, QuadratureError, mf.IntegrationQualityError, ArithmeticError) as exc:
        print(f"onebit: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    text = render(rows, args.format)
    if args.output:
        with open(args.output, "w", newline="") as fh:
            fh.write(text)
        if args.command in ("table1", "table2", "table3"):
            sys.stdout.write(pretty(rows))
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
