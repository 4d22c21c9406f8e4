"""Command-line front end.

Four subcommands, all driven by a YAML scenario file:

    gmsim check --config scenario.yaml
    gmsim solve-static --config scenario.yaml [--belief 0.3,0.7] [--scan-roots]
    gmsim simulate --config scenario.yaml [--paths N] [--out DIR]
    gmsim verify --config scenario.yaml [--paths N] [--out DIR]

Exit codes: 0 success, 1 a verification or condition check failed, 2 bad
configuration or usage, 3 numerical failure (no convergence, degenerate
probabilities, insufficient data). All randomness flows from the scenario
seed; rerunning a command with the same inputs rewrites identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

from .config import ScenarioConfig, load_scenario
from .core import Belief, Quote
from .engine import Outcome, PathRecord, simulate_gmps_path, simulate_paths
from .equilibrium import (
    contraction_constants,
    find_fixed_points,
    solve_static_quotes,
)
from .errors import (
    ConditionFailed,
    ConfigError,
    GmsimError,
    GridMismatch,
    InsufficientData,
    NoConvergence,
    NotDifferentiable,
    ZeroBuyProbability,
    ZeroSellProbability,
)
from .noise import check_gm_condition
from .verification import (
    OracleFilterConfig,
    compare_filters,
    consistency_check,
    intensity_test,
    oracle_filter,
    zero_profit_test,
)

_NUMERICAL_ERRORS = (
    ConditionFailed,
    NoConvergence,
    ZeroBuyProbability,
    ZeroSellProbability,
    NotDifferentiable,
    GridMismatch,
    InsufficientData,
)


def _fmt(x: float) -> str:
    return f"{x:.12g}"


# --------------------------------------------------------------------------
# check


def cmd_check(args) -> int:
    cfg = load_scenario(args.config)
    report = check_gm_condition(cfg.noise, cfg.grid.width)
    print(f"K        = {_fmt(report.K)}")
    print(f"M        = {_fmt(report.M)}")
    print(f"Phi(0)   = {_fmt(report.phi_at_zero)}")
    print(f"Phi(C)   = {_fmt(report.phi_at_c)}")
    if not report.passes:
        print("condition: FAIL (needs K < 1 and 0 < Phi(0) < 1)")
        return 1
    constants = contraction_constants(cfg.grid, cfg.noise, cfg.arrival_rate)
    print(f"L        = {_fmt(constants.L)}")
    print(f"K1       = {_fmt(constants.K1)}")
    print(f"t_star   = {_fmt(constants.t_star)}")
    print("condition: PASS")
    return 0


# --------------------------------------------------------------------------
# solve-static


def _parse_belief(text: str) -> Belief:
    try:
        values = [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"--belief: expected comma-separated numbers, got {text!r}")
    return Belief(values)


def cmd_solve_static(args) -> int:
    cfg = load_scenario(args.config)
    belief = _parse_belief(args.belief) if args.belief else cfg.initial_belief
    if belief.n != cfg.grid.n:
        raise ConfigError(
            f"--belief: got {belief.n} entries for a {cfg.grid.n}-state grid"
        )
    quotes = solve_static_quotes(
        belief, cfg.grid, cfg.noise, tol=cfg.fp_tol, force=args.force
    )
    print(f"ask    = {_fmt(quotes.ask)}   ({quotes.ask_iterations} iterations)")
    print(f"bid    = {_fmt(quotes.bid)}   ({quotes.bid_iterations} iterations)")
    print(f"spread = {_fmt(quotes.spread)}")
    if args.scan_roots:
        for label, buy_side in (("ask", True), ("bid", False)):
            roots = find_fixed_points(belief, cfg.grid, cfg.noise, buy_side=buy_side)
            listed = ", ".join(_fmt(r) for r in roots) if roots else "none"
            print(f"{label} fixed points on scan: {listed}")
    return 0


# --------------------------------------------------------------------------
# simulate


def _event_json(offset: int, e) -> str:
    eps = e.eps if math.isfinite(e.eps) else ("inf" if e.eps > 0 else "-inf")
    return json.dumps(
        {
            "path": offset,
            "t": e.t,
            "x": e.x,
            "eps": eps,
            "ask": e.ask,
            "bid": e.bid,
            "outcome": e.outcome.value,
            "belief_before": [float(v) for v in e.belief_before],
            "belief_after": [float(v) for v in e.belief_after],
            "profit": e.profit,
        }
    )


def _write_outputs(out_dir: Path, records: list[PathRecord], grid) -> list[str]:
    out_dir.mkdir(parents=True, exist_ok=True)
    events_path = out_dir / "events.jsonl"
    with events_path.open("w") as fh:
        for rec in records:
            for e in rec.events:
                fh.write(_event_json(rec.offset, e) + "\n")

    summary_path = out_dir / "summary.csv"
    with summary_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["path", "n_events", "n_buys", "n_sells", "buy_profit", "sell_profit"]
        )
        for rec in records:
            writer.writerow(
                [rec.offset, len(rec.events), rec.n_buys, rec.n_sells,
                 repr(float(rec.buy_profit)), repr(float(rec.sell_profit))]
            )

    written = [events_path.name, summary_path.name]
    first = records[0]
    if first.sample_times is not None:
        plot_path = out_dir / "plot.csv"
        means = first.sample_beliefs @ grid.values
        with plot_path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "ask", "bid", "mean", "x"])
            for i, t in enumerate(first.sample_times):
                writer.writerow(
                    [repr(float(t)), repr(float(first.sample_asks[i])),
                     repr(float(first.sample_bids[i])), repr(float(means[i])),
                     repr(float(first.sample_values[i]))]
                )
        written.append(plot_path.name)
    return written


def cmd_simulate(args) -> int:
    cfg = load_scenario(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    n_paths = args.paths if args.paths is not None else cfg.n_paths
    if n_paths < 1:
        raise ConfigError(f"--paths: must be at least 1, got {n_paths}")
    model = cfg.model()
    plot_dt = cfg.horizon / 400.0
    records = [
        simulate_gmps_path(
            model,
            cfg.horizon,
            cfg.sim_config(
                sample_dt=plot_dt if offset == 0 else None,
                perturb_ask=args.perturb_ask,
                force=args.force,
            ),
            seed=seed,
            offset=offset,
        )
        for offset in range(n_paths)
    ]
    out_dir = Path(args.out)
    written = _write_outputs(out_dir, records, cfg.grid)
    n_trades = sum(r.n_trades for r in records)
    print(
        f"{n_paths} path(s), {n_trades} trades, seed {seed}; "
        f"wrote {', '.join(written)} in {out_dir}"
    )
    return 0


# --------------------------------------------------------------------------
# verify


def _filter_check(cfg: ScenarioConfig, model, seed: int, force: bool,
                  perturb: float) -> dict:
    h = 1e-3
    horizon = min(cfg.horizon, 2.0)
    sim = cfg.sim_config(sample_dt=h / 4, perturb_ask=perturb, force=force)
    rec = simulate_gmps_path(model, horizon, sim, seed=seed, offset=0)
    beliefs = {}
    times = {}
    for step in (h, h / 2, h / 4):
        times[step], beliefs[step] = oracle_filter(
            rec, model, OracleFilterConfig(h=step)
        )
    cmp = compare_filters(
        rec.sample_times, rec.sample_beliefs, times[h], beliefs[h]
    )
    gap_coarse = float(
        abs(beliefs[h][-1] - beliefs[h / 2][-1]).sum()
    )
    gap_fine = float(
        abs(beliefs[h / 2][-1] - beliefs[h / 4][-1]).sum()
    )
    out = {
        "h": h,
        "horizon": horizon,
        "n_trades": rec.n_trades,
        "max_l1": cmp.max_l1,
        "threshold": 0.01,
        "self_gap_h": gap_coarse,
        "self_gap_h_over_2": gap_fine,
    }
    if gap_fine > 1e-12:
        ratio = gap_coarse / gap_fine
        out["convergence_ratio"] = ratio
        out["status"] = (
            "pass" if cmp.max_l1 <= 0.01 and 1.5 <= ratio <= 2.5 else "fail"
        )
    else:
        # no observable splitting error (e.g. no arrivals): distance alone
        out["convergence_ratio"] = None
        out["status"] = "pass" if cmp.max_l1 <= 0.01 else "fail"
    return out


def _intensity_check(cfg: ScenarioConfig, model, seed: int) -> dict:
    grid = cfg.grid
    w = grid.width
    x0 = float(grid.values[0])
    xn = float(grid.values[-1])
    pairs = [
        (Quote(ask=x0, bid=x0), x0),  # survival(0) symmetry point
        (Quote(ask=xn + w / 4, bid=xn - w / 4), xn),
        (Quote(ask=x0 + w / 2, bid=x0 - w / 4), x0),
    ]
    lam = model.arrival_rate
    if lam <= 0.0:
        raise InsufficientData("arrival rate is zero; no trades to count")
    p_min = min(
        min(model.noise.survival(q.ask - x), model.noise.cdf(q.bid - x))
        for q, x in pairs
    )
    if p_min <= 0.0:
        raise InsufficientData(
            "a frozen quote leaves one side with zero trade probability"
        )
    horizon = 30.0 / (lam * p_min)
    results = []
    for k, (quote, x) in enumerate(pairs):
        report = intensity_test(
            model, quote, x, horizon, n_trials=150, seed=seed + k
        )
        results.append(
            {
                "ask": quote.ask,
                "bid": quote.bid,
                "state": x,
                "buy_rate": report.buy.expected_rate,
                "buy_p_value": report.buy.p_value,
                "sell_rate": report.sell.expected_rate,
                "sell_p_value": report.sell.p_value,
                "passed": report.passed,
            }
        )
    return {
        "pairs": results,
        "status": "pass" if all(r["passed"] for r in results) else "fail",
    }


def cmd_verify(args) -> int:
    cfg = load_scenario(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    n_paths = args.paths if args.paths is not None else cfg.n_paths
    model = cfg.model()
    checks: dict[str, dict] = {}

    sim = cfg.sim_config(perturb_ask=args.perturb_ask, force=args.force)
    records = simulate_paths(model, cfg.horizon, sim, seed=seed, n_paths=n_paths)

    try:
        zp = zero_profit_test(records)
        checks["zero_profit"] = {
            "status": "pass" if zp.passed else "fail",
            "n_paths": zp.n_paths,
            "n_buys": zp.n_buys,
            "n_sells": zp.n_sells,
            "buy_mean": zp.buy_mean,
            "buy_se": zp.buy_se,
            "sell_mean": zp.sell_mean,
            "sell_se": zp.sell_se,
            "z_buy": zp.z_buy,
            "z_sell": zp.z_sell,
        }
    except InsufficientData as exc:
        checks["zero_profit"] = {"status": "skipped", "reason": str(exc)}

    cons = consistency_check(records, cfg.grid)
    checks["consistency"] = {
        "status": "pass" if cons.passed else "fail",
        "n_events": cons.n_events,
        "max_quote_gap": cons.max_quote_gap,
        "max_sum_error": cons.max_sum_error,
        "min_component": cons.min_component,
        "ordering_violations": cons.ordering_violations,
    }

    checks["filter_oracle"] = _filter_check(
        cfg, model, seed, args.force, args.perturb_ask
    )

    try:
        checks["intensity"] = _intensity_check(cfg, model, seed)
    except InsufficientData as exc:
        checks["intensity"] = {"status": "skipped", "reason": str(exc)}

    ran = [name for name, c in checks.items() if c["status"] != "skipped"]
    passed = all(checks[name]["status"] == "pass" for name in ran)
    report = {
        "seed": seed,
        "n_paths": n_paths,
        "perturb_ask": args.perturb_ask,
        "checks": checks,
        "passed": passed,
    }

    for name, c in checks.items():
        line = f"{c['status'].upper():7s} {name}"
        if name == "zero_profit" and c["status"] != "skipped":
            line += f"  z_buy={c['z_buy']:+.2f} z_sell={c['z_sell']:+.2f}"
        elif name == "filter_oracle":
            line += f"  max_l1={c['max_l1']:.2e}"
            if c.get("convergence_ratio"):
                line += f" ratio={c['convergence_ratio']:.2f}"
        elif name == "consistency":
            line += f"  quote_gap={c['max_quote_gap']:.2e}"
        elif name == "intensity" and c["status"] != "skipped":
            worst = min(
                min(p["buy_p_value"], p["sell_p_value"]) for p in c["pairs"]
            )
            line += f"  min_p={worst:.3f}"
        elif c["status"] == "skipped":
            line += f"  ({c['reason']})"
        print(line)
    print(f"overall: {'PASS' if passed else 'FAIL'}")

    if args.out is not None:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "verify_report.json").write_text(
            json.dumps(report, indent=2) + "\n"
        )
    return 0 if passed else 1


# --------------------------------------------------------------------------
# wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gmsim",
        description="Event-driven Glosten-Milgrom market making simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="scenario YAML file")

    p_check = sub.add_parser("check", help="evaluate the admissibility condition")
    add_common(p_check)
    p_check.set_defaults(handler=cmd_check)

    p_solve = sub.add_parser("solve-static", help="solve the static quotes")
    add_common(p_solve)
    p_solve.add_argument("--belief", help="override belief, e.g. 0.3,0.7")
    p_solve.add_argument("--force", action="store_true",
                         help="iterate without a contraction certificate")
    p_solve.add_argument("--scan-roots", action="store_true",
                         help="also list every fixed point found by a scan")
    p_solve.set_defaults(handler=cmd_solve_static)

    p_sim = sub.add_parser("simulate", help="simulate paths, write logs")
    add_common(p_sim)
    p_sim.add_argument("--seed", type=int, help="override the scenario seed")
    p_sim.add_argument("--paths", type=int, help="override n_paths")
    p_sim.add_argument("--out", default="gmsim-out", help="output directory")
    p_sim.add_argument("--force", action="store_true")
    p_sim.add_argument("--perturb-ask", type=float, default=0.0,
                       help="shift every ask up by this fraction of the range")
    p_sim.set_defaults(handler=cmd_simulate)

    p_ver = sub.add_parser("verify", help="run the verification suite")
    add_common(p_ver)
    p_ver.add_argument("--seed", type=int)
    p_ver.add_argument("--paths", type=int)
    p_ver.add_argument("--out", help="directory for verify_report.json")
    p_ver.add_argument("--force", action="store_true")
    p_ver.add_argument("--perturb-ask", type=float, default=0.0)
    p_ver.set_defaults(handler=cmd_verify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except GmsimError as exc:  # any future subclass defaults to numerical
        print(f"error: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
