"""``enroll-opt`` command-line entry point.

Exit codes: 0 success, 1 other failure, 2 invalid configuration or
arguments, 3 enrollment target unreachable, 4 no feasible allocation,
5 exhaustive search larger than its ceiling.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path
from typing import Sequence

from . import appendix, forecast
from .capped import time_to_cap_cdf
from .config import DAYS_PER_MONTH, ConfigError, StudyConfig, load_config
from .design import DIRECT_CEILING, DEConfig, optimize
from .errors import (
    DimensionCeilingError,
    DomainError,
    EnrollOptError,
    InfeasibleError,
    UnreachableTargetError,
)
from .oracle import SimConfig, simulate
from .reports import (
    AppendixOut,
    AppendixRowOut,
    CapImpactOut,
    ComparisonRow,
    CompletionOut,
    CountryCapOut,
    ForecastSummaryOut,
    OptimizeOut,
    SimulateOut,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_UNREACHABLE = 3
EXIT_INFEASIBLE = 4
EXIT_CEILING = 5

_UNITS_NOTE = (
    f"Rates given as mean_per_month are converted at {DAYS_PER_MONTH:g} days per month; "
    "all times are in days."
)


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _write_json(path: Path, doc) -> None:
    path.write_text(doc.model_dump_json(indent=2) + "\n", encoding="utf-8")


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _allocation_arg(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"--allocation: expected comma-separated integers, got {text!r}") from None


def _plan(cfg: StudyConfig, args):
    return cfg.to_plan(_allocation_arg(getattr(args, "allocation", None)))


def cmd_forecast(args) -> int:
    cfg = load_config(args.config)
    plan = _plan(cfg, args)
    out = _out_dir(args.out)
    summary = forecast.completion_summary(plan, args.q, args.method)
    series = forecast.forecast_series(plan, args.q, args.method)
    _write_csv(out / "forecast.csv", ("day", "mean", "median", "lo", "hi", "pos"), series.rows())
    doc = ForecastSummaryOut(
        method=args.method,
        target_n=plan.target_n,
        t_plan=plan.t_plan,
        pos_t_plan=summary.pos_t_plan,
        completion=CompletionOut(
            mean_day=summary.mean_day, lo_day=summary.lo_day, hi_day=summary.hi_day, q_level=args.q
        ),
        horizon_days=int(series.days[-1]),
    )
    _write_json(out / "forecast_summary.json", doc)
    print(
        f"completion: mean {summary.mean_day:.1f} days, {args.q:.0%} interval "
        f"[{summary.lo_day}, {summary.hi_day}]; PoS at day {plan.t_plan}: {summary.pos_t_plan:.4f}"
    )
    return EXIT_OK


def cmd_cap_impact(args) -> int:
    cfg = load_config(args.config)
    plan = _plan(cfg, args)
    out = _out_dir(args.out)
    rep = forecast.cap_impact_report(plan, args.q, args.method)
    countries = [
        CountryCapOut(
            country_id=c.country_id,
            cap=c.cap,
            prob_cap_by_t_plan=c.prob_cap_by_t_plan,
            cap_time_quantile=c.cap_time_quantile,
            flagged=c.flagged,
            reasons=c.reasons,
        )
        for c in rep.countries
    ]
    doc = CapImpactOut(
        method=rep.method,
        q=rep.q,
        t_plan=rep.t_plan,
        pos_t_plan=rep.pos_t_plan,
        completion_quantile=rep.completion_quantile,
        flagged=rep.flagged_ids,
        countries=countries,
    )
    _write_json(out / "cap_impact.json", doc)
    _write_csv(
        out / "cap_impact.csv",
        ("country_id", "cap", "prob_cap_by_t_plan", "cap_time_quantile", "flagged", "reasons"),
        (
            (c.country_id, c.cap, c.prob_cap_by_t_plan, "" if c.cap_time_quantile is None else c.cap_time_quantile,
             int(c.flagged), "; ".join(c.reasons))
            for c in rep.countries
        ),
    )
    flagged = ", ".join(rep.flagged_ids) or "none"
    print(f"PoS at day {rep.t_plan}: {rep.pos_t_plan:.4f}; flagged caps: {flagged}")
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg = load_config(args.config)
    d = cfg.design_inputs()
    out = _out_dir(args.out)
    res = optimize(
        d.bounds,
        d.kinetics,
        d.costs,
        d.target_n,
        args.pos,
        caps=d.caps if d.any_capped else None,
        method=args.method,
        de_config=DEConfig(seed=args.seed),
        ceiling=args.ceiling,
    )
    doc = OptimizeOut(
        country_ids=[c.id for c in cfg.countries],
        target_pos=args.pos,
        **res.to_dict(),
    )
    _write_json(out / "optimization.json", doc)
    print(
        f"{res.method}: {res.total_sites} sites, cost {res.total_cost:,.0f}, "
        f"PoS {res.pos_achieved:.4f} (target {args.pos})"
    )
    return EXIT_OK


def _z(analytic: float, mc: float, se: float) -> float:
    if se > 0:
        return (mc - analytic) / se
    return 0.0 if math.isclose(mc, analytic, abs_tol=1e-12) else math.copysign(math.inf, mc - analytic)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    plan = _plan(cfg, args)
    out = _out_dir(args.out)
    horizon = args.horizon or plan.t_plan
    sim = simulate(plan, SimConfig(replications=args.reps, seed=args.seed, horizon=horizon))
    rows = sim.rows()
    _write_csv(out / "simulation.csv", tuple(rows[0]), (tuple(r.values()) for r in rows))

    comparison: list[ComparisonRow] = []
    mean = sim.mean_by_day()
    mean_se = sim.mean_se_by_day()
    for day in sorted({max(1, horizon // 4), max(1, horizon // 2), max(1, 3 * horizon // 4), horizon}):
        a = forecast.global_mean_var(plan, day)[0]
        m, s = float(mean[day - 1]), float(mean_se[day - 1])
        comparison.append(ComparisonRow(quantity="mean", day=day, analytic=a, monte_carlo=m, std_error=s, z=_z(a, m, s)))
    if plan.t_plan <= horizon:
        a = forecast.pos(plan, plan.t_plan)
        m, s = sim.pos(plan.t_plan)
        comparison.append(ComparisonRow(quantity="pos", day=plan.t_plan, analytic=a, monte_carlo=m, std_error=s, z=_z(a, m, s)))
        for c in plan.countries:
            if c.cap is None:
                continue
            a = time_to_cap_cdf(c, plan.t_plan)
            m, s = sim.cap_hit_prob(c.id, plan.t_plan)
            comparison.append(
                ComparisonRow(quantity=f"cap_hit:{c.id}", day=plan.t_plan, analytic=a, monte_carlo=m, std_error=s, z=_z(a, m, s))
            )
    _write_csv(
        out / "comparison.csv",
        ("quantity", "day", "analytic", "monte_carlo", "std_error", "z"),
        ((r.quantity, r.day, r.analytic, r.monte_carlo, r.std_error, r.z) for r in comparison),
    )
    p, se = sim.pos(min(plan.t_plan, horizon))
    doc = SimulateOut(
        replications=args.reps,
        seed=args.seed,
        horizon=horizon,
        pos_t_plan=p,
        pos_t_plan_se=se,
        max_abs_z=max((abs(r.z) for r in comparison), default=0.0),
        comparison=comparison,
    )
    _write_json(out / "simulation_summary.json", doc)
    print(f"{args.reps} replications; max |z| vs analytic: {doc.max_abs_z:.2f}")
    return EXIT_OK


def cmd_appendix_check(args) -> int:
    out = _out_dir(args.out)
    rows = appendix.appendix_table()
    decreasing = appendix.strictly_decreasing(rows)
    doc = AppendixOut(
        rows=[AppendixRowOut(K=r.K, dif=r.dif, reference=r.reference, passed=r.passed) for r in rows],
        strictly_decreasing=decreasing,
        tolerance=appendix.TOLERANCE,
        all_passed=decreasing and all(r.passed for r in rows),
    )
    _write_csv(out / "appendix.csv", ("K", "dif", "reference", "passed"), ((r.K, r.dif, r.reference, int(r.passed)) for r in rows))
    _write_json(out / "appendix.json", doc)
    for r in rows:
        print(f"K={r.K:>2}  dif={r.dif:.6f}  reference={r.reference:.5f}  {'PASS' if r.passed else 'FAIL'}")
    print(f"strictly decreasing: {'yes' if decreasing else 'no'}")
    return EXIT_OK


def _unit_interval(text: str) -> float:
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="enroll-opt",
        description="Enrollment forecasting and site-allocation optimization. " + _UNITS_NOTE,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_allocation=True):
        p.add_argument("config", help="study configuration JSON")
        p.add_argument("--out", default=".", help="output directory (default: current)")
        if with_allocation:
            p.add_argument("--allocation", help="comma-separated site counts per country, overriding the config")

    p = sub.add_parser("forecast", help="per-day predictive summary and completion time", description=_UNITS_NOTE)
    common(p)
    p.add_argument("--method", choices=forecast.METHODS, default="convolution")
    p.add_argument("--q", type=_unit_interval, default=0.9, help="central interval level (default 0.9)")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("cap-impact", help="flag caps likely to bind before completion", description=_UNITS_NOTE)
    common(p)
    p.add_argument("--method", choices=forecast.METHODS, default="convolution")
    p.add_argument("--q", type=_unit_interval, default=0.9, help="quantile level (default 0.9)")
    p.set_defaults(func=cmd_cap_impact)

    p = sub.add_parser("optimize", help="cost-minimal site allocation", description=_UNITS_NOTE)
    common(p, with_allocation=False)
    p.add_argument("--pos", type=_unit_interval, required=True, help="required probability of success")
    p.add_argument("--method", choices=("auto", "lp", "direct", "de"), default="auto")
    p.add_argument("--seed", type=int, default=0, help="seed for differential evolution")
    p.add_argument("--ceiling", type=int, default=DIRECT_CEILING, help="largest box for exhaustive search")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("simulate", help="Monte Carlo run with analytic comparison", description=_UNITS_NOTE)
    common(p)
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=int, default=None, help="last simulated day (default: t_plan_days)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("appendix-check", help="aggregation error table against reference values")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.set_defaults(func=cmd_appendix_check)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "reps", 1) < 1:
        parser.error("--reps must be >= 1")
    try:
        return args.func(args)
    except (ConfigError, DomainError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except UnreachableTargetError as err:
        print(f"unreachable: {err}", file=sys.stderr)
        return EXIT_UNREACHABLE
    except InfeasibleError as err:
        print(f"infeasible: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DimensionCeilingError as err:
        print(f"too large: {err}", file=sys.stderr)
        return EXIT_CEILING
    except EnrollOptError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
