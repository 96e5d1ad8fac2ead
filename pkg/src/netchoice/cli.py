"""Command-line entry point binding every module with uniform I/O and exit codes.

Exit codes: 0 success, 1 usage error, 2 input/validation failure, 3 a
computation that could not be completed (infeasible system, non-convergence).
All stochastic subcommands take --seed and are reproducible; identical
invocations produce byte-identical structured output.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, field

import numpy as np

from . import ambassador, estimation, herding, pricing, report, sampling, shares
from .errors import (
    AssumptionError,
    ConvergenceError,
    InfeasibleError,
    ModelFormatError,
    NetchoiceError,
    SimplexBreakdownError,
    StructureError,
)
from .model import parse_model, serialize_model, validate

DEFAULT_SEED = 1729

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVALID = 2
EXIT_FAILED = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


@dataclass
class Table:
    name: str
    columns: list[str]
    rows: list[list] = field(default_factory=list)


def _fmt_cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def _emit_table(tables: list[Table]) -> str:
    blocks = []
    for table in tables:
        widths = [len(c) for c in table.columns]
        rendered = [[_fmt_cell(v) for v in row] for row in table.rows]
        for row in rendered:
            for i, cell in enumerate(row):
                widths[i] = max(widths[i], len(cell))
        lines = [f"== {table.name} =="]
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(table.columns)))
        for row in rendered:
            lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def _emit_delimited(tables: list[Table]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    for table in tables:
        out.write(f"# {table.name}\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([_fmt_cell(v) for v in row])
    return out.getvalue()


def _emit_structured(tables: list[Table], extra: dict) -> str:
    payload = {
        "tables": {
            t.name: {"columns": t.columns, "rows": t.rows} for t in tables
        }
    }
    payload.update(extra)
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _write_output(text: str, out_path: str | None) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _finish(args, tables: list[Table], extra: dict | None = None) -> int:
    fmt = args.format
    if fmt == "table":
        text = _emit_table(tables)
    elif fmt == "delimited":
        text = _emit_delimited(tables)
    else:
        text = _emit_structured(tables, extra or {})
    _write_output(text, args.out)
    return EXIT_OK


def _cmd_validate(args) -> int:
    model = parse_model(args.model)
    result = validate(model)
    tables = [
        Table("validation", ["field", "value"], [
            ["satisfies_collective_decisiveness", str(result.satisfies_assumption1).lower()],
            ["spectral_radius_estimate", float(result.spectral_radius_estimate)],
            ["unreachable_agents", ",".join(result.unreachable_agents) or "-"],
        ]),
        Table("row_sum_residuals", ["agent", "residual"], [
            [a, float(r)] for a, r in zip(model.agents, result.row_sum_residuals)
        ]),
    ]
    status = _finish(args, tables)
    if not result.satisfies_assumption1:
        print("validation failed: model is not collectively decisive", file=sys.stderr)
        return EXIT_INVALID
    return status


def _solution_tables(model, solution) -> list[Table]:
    return [
        Table("pi", ["agent", *model.choices], [
            [model.agents[i], *map(float, solution.pi[i])] for i in range(model.n_agents)
        ]),
        Table("choice_shares", ["choice", "share"], [
            [c, float(v)] for c, v in zip(model.choices, solution.choice_shares)
        ]),
        Table("agents", ["agent", "centrality", "decisiveness", "decision_share"], [
            [model.agents[i], float(solution.centrality[i]),
             float(solution.decisiveness[i]), float(solution.decision_shares[i])]
            for i in range(model.n_agents)
        ]),
        Table("diagnostics", ["field", "value"], [
            ["solver", solution.solver],
            ["ill_conditioned_regime", str(solution.ill_conditioned).lower()],
        ]),
    ]


def _cmd_shares(args) -> int:
    model = parse_model(args.model)
    solution = shares.solve_choice_matrix(model, solver=args.solver)
    return _finish(args, _solution_tables(model, solution))


def _cmd_ambassadors(args) -> int:
    model = parse_model(args.model)
    w = model.endowment
    plan = ambassador.greedy_select(model, args.choice, w, args.budget, lazy=args.lazy)
    tables = [
        Table("plan", ["step", "agent", "marginal_gain"], [
            [i + 1, a, float(g)]
            for i, (a, g) in enumerate(zip(plan.selected, plan.marginal_gains))
        ]),
        Table("summary", ["field", "value"], [
            ["target_choice", plan.target_choice],
            ["budget", plan.budget],
            ["baseline_share", float(plan.baseline_share)],
            ["final_share", float(plan.final_share)],
            ["lazy", str(plan.lazy).lower()],
            ["evaluations", plan.evaluations],
        ]),
    ]
    if args.oracle:
        best_set, best_value = ambassador.brute_force_select(model, args.choice, w, args.budget)
        ratio = plan.final_share / best_value if best_value > 0 else 1.0
        tables.append(Table("oracle", ["field", "value"], [
            ["optimal_set", ",".join(sorted(best_set))],
            ["optimal_share", float(best_value)],
            ["greedy_over_optimal", float(ratio)],
        ]))
    modified = ambassador.apply_ambassadors(model, plan.selected, plan.target_choice)
    return _finish(args, tables, {"modified_model": serialize_model(modified)})


def _cmd_simulate(args) -> int:
    model = parse_model(args.model)
    if args.joint:
        stats = sampling.joint_outcome_stats(model, args.samples, args.seed,
                                             u_choice=args.u_choice)
        tables = [
            Table("joint_summary", ["field", "value"], [
                ["samples", stats.samples],
                ["accepted", stats.accepted],
                ["rejected_cycle", stats.rejected_cycle],
                ["rejected_u_rule", stats.rejected_u_rule],
                ["max_marginal_discrepancy", float(stats.max_marginal_discrepancy)],
            ]),
            Table("accepted_marginals", ["agent", *model.choices], [
                [model.agents[i], *map(float, stats.marginals[i])]
                for i in range(model.n_agents)
            ]),
        ]
        return _finish(args, tables)
    estimates, errors = sampling.estimate_choice_probs_mc(
        model, args.samples, args.seed, threads=args.threads)
    tables = [
        Table("estimates", ["agent", *model.choices], [
            [model.agents[i], *map(float, estimates[i])] for i in range(model.n_agents)
        ]),
        Table("standard_errors", ["agent", *model.choices], [
            [model.agents[i], *map(float, errors[i])] for i in range(model.n_agents)
        ]),
    ]
    return _finish(args, tables)


def _cmd_herding(args) -> int:
    if args.herding_command == "moments":
        table = herding.herd_moments(args.dmax, args.mmax)
        columns = ["d", *(f"m{m}" for m in range(1, args.mmax + 1))]
        rows = [
            [d, *(float(table.moment(d, m)) for m in range(1, args.mmax + 1))]
            for d in range(1, args.dmax + 1)
        ]
        return _finish(args, [Table("herd_moments", columns, rows)])
    summary = herding.simulate_urn(args.bins, args.total, args.trials, args.seed)
    limit = herding.expected_max_herd_fraction(args.bins)
    rows = [
        ["bins", summary.bins],
        ["total", summary.total],
        ["trials", summary.trials],
        ["mean_max_fraction", float(summary.mean_max_fraction)],
        ["limit_expectation", float(limit)],
    ]
    rows += [[f"q{int(q * 100):02d}", float(v)] for q, v in sorted(summary.quantiles.items())]
    return _finish(args, [Table("urn_simulation", ["field", "value"], rows)])


def _cmd_price(args) -> int:
    pm = pricing.parse_parametric(args.model)
    w = pm.base.endowment
    if args.equilibrium:
        result = pricing.find_equilibrium(pm, w, damping=args.damping, tol=args.tol)
        tables = [
            Table("equilibrium", ["firm", "discount", "profit"], [
                [firm.choice, float(result.discounts[f]),
                 float(pricing.profit(pm, firm.choice, result.discounts, w).value)]
                for f, firm in enumerate(pm.firms)
            ]),
            Table("iteration", ["field", "value"], [
                ["converged", str(result.converged).lower()],
                ["residual", float(result.residual)],
                ["rounds", result.rounds],
            ]),
        ]
        if not result.converged:
            _finish(args, tables)
            print("best-response iteration did not converge", file=sys.stderr)
            return EXIT_FAILED
        return _finish(args, tables)
    if not args.firm:
        raise _UsageError("price requires --firm CHOICE or --equilibrium")
    z = np.zeros(len(pm.firms))
    reply = pricing.best_response(pm, args.firm, z, w, tol=args.tol)
    z[pm.firm_index(args.firm)] = reply
    value = pricing.profit(pm, args.firm, z, w).value
    tables = [Table("best_response", ["field", "value"], [
        ["firm", args.firm],
        ["discount", float(reply)],
        ["profit", float(value)],
    ])]
    return _finish(args, tables)


def _estimate_inputs(args):
    agents, choices, observed = estimation.parse_observed(args.observed)
    knowledge = estimation.parse_knowledge(args.knowledge) if args.knowledge else []
    return estimation.build_polyhedron(observed, knowledge, agents, choices)


def _cmd_estimate(args) -> int:
    poly = _estimate_inputs(args)
    phase1 = estimation.phase1_min_slack(poly)
    fixed = poly.with_slacks(phase1.slack_plus, phase1.slack_minus)
    result = estimation.interior_point_estimate(fixed)
    tables = [
        Table("summary", ["field", "value"], [
            ["phase1_objective", float(phase1.objective)],
            ["interior_margin", float(result.margin)],
            ["margin_rounds", result.rounds],
            ["converted_rows", result.converted_rows],
        ]),
        Table("adoption_estimate", ["agent", *poly.agents], [
            [poly.agents[i], *map(float, result.adoption[i])]
            for i in range(poly.n_agents)
        ]),
        Table("direct_estimate", ["agent", *poly.choices], [
            [poly.agents[i], *map(float, result.direct[i])]
            for i in range(poly.n_agents)
        ]),
        Table("slack", ["agent", "choice", "plus", "minus"], [
            [poly.agents[i], poly.choices[j],
             float(phase1.slack_plus[i, j]), float(phase1.slack_minus[i, j])]
            for i in range(poly.n_agents) for j in range(poly.n_choices)
        ]),
    ]
    return _finish(args, tables)


def _cmd_export_lp(args) -> int:
    poly = _estimate_inputs(args)
    if args.phase == "interior":
        phase1 = estimation.phase1_min_slack(poly)
        poly = poly.with_slacks(phase1.slack_plus, phase1.slack_minus)
    _write_output(estimation.export_lp(poly, objective=args.phase), args.out)
    return EXIT_OK


def _cmd_report(args) -> int:
    if not args.out:
        raise _UsageError("report requires --out DIRECTORY")
    if args.kind == "shares":
        if not args.model:
            raise _UsageError("report --kind shares requires --model")
        model = parse_model(args.model)
        written = report.render_share_report(model, args.out)
    else:
        written = report.render_herding_report(
            args.dmax, args.total, args.trials, args.seed, args.out)
    for path in written:
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("table", "delimited", "structured"),
                        default="table", help="output rendering")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED,
                        help="random seed (fixed default for reproducibility)")
    common.add_argument("--threads", type=int, default=1,
                        help="worker count; affects wall time only, never results")
    common.add_argument("--out", help="write output to this path instead of stdout")

    parser = _Parser(prog="netchoice",
                     description="Choice shares, targeting, and pricing on recommendation networks")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", parents=[common], help="check a model document")
    p.add_argument("--model", required=True)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("shares", parents=[common], help="closed-form shares and probabilities")
    p.add_argument("--model", required=True)
    p.add_argument("--solver", choices=("dense", "iterative"), default="dense")
    p.set_defaults(func=_cmd_shares)

    p = sub.add_parser("ambassadors", parents=[common], help="greedy ambassador selection")
    p.add_argument("--model", required=True)
    p.add_argument("--choice", required=True, help="target choice id")
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--lazy", action="store_true", help="use the lazy-evaluation queue")
    p.add_argument("--oracle", action="store_true",
                   help="compare against brute force (small instances)")
    p.set_defaults(func=_cmd_ambassadors)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo samplers")
    p.add_argument("--model", required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--joint", action="store_true", help="joint pointer sampler with rejection")
    p.add_argument("--u-choice", dest="u_choice",
                   help="designated non-activation choice for the alignment rule")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("herding", parents=[common], help="largest-herd statistics")
    hsub = p.add_subparsers(dest="herding_command", required=True, parser_class=_Parser)
    hm = hsub.add_parser("moments", parents=[common], help="closed-form moment table")
    hm.add_argument("--dmax", type=int, required=True)
    hm.add_argument("--mmax", type=int, required=True)
    hm.set_defaults(func=_cmd_herding)
    hs = hsub.add_parser("simulate", parents=[common], help="urn simulation")
    hs.add_argument("--bins", type=int, required=True)
    hs.add_argument("--total", type=int, required=True)
    hs.add_argument("--trials", type=int, required=True)
    hs.set_defaults(func=_cmd_herding)

    p = sub.add_parser("price", parents=[common], help="best responses and equilibrium")
    p.add_argument("--model", required=True)
    p.add_argument("--firm", help="compute this firm's best response at zero rival discounts")
    p.add_argument("--equilibrium", action="store_true")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--damping", type=float, default=0.5)
    p.set_defaults(func=_cmd_price)

    p = sub.add_parser("estimate", parents=[common],
                       help="two-phase polyhedral parameter estimation")
    p.add_argument("--observed", required=True, help="observed probabilities document")
    p.add_argument("--knowledge", help="typed side-knowledge document")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("export-lp", parents=[common], help="write the estimation LP")
    p.add_argument("--observed", required=True)
    p.add_argument("--knowledge")
    p.add_argument("--phase", choices=("phase1", "interior"), default="phase1")
    p.set_defaults(func=_cmd_export_lp)

    p = sub.add_parser("report", parents=[common],
                       help="render figures and delimited tables into a directory")
    p.add_argument("--kind", choices=("shares", "herding"), required=True)
    p.add_argument("--model")
    p.add_argument("--dmax", type=int, default=25)
    p.add_argument("--total", type=int, default=1000)
    p.add_argument("--trials", type=int, default=2000)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelFormatError, AssumptionError, FileNotFoundError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (InfeasibleError, ConvergenceError, SimplexBreakdownError, StructureError) as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except NetchoiceError as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def console_main() -> None:
    sys.exit(main())
