"""Report rendering: delimited tables plus matplotlib figures on disk.

The CLI's report path writes each table as a CSV file and renders a companion
PNG next to it, so a run leaves both machine-readable data and something a
human can glance at.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .herding import expected_max_herd_fraction, simulate_urn
from .model import NetworkModel
from .shares import solve_choice_matrix


def _write_csv(path: Path, columns, rows) -> Path:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(columns)
        writer.writerows(rows)
    return path


def render_share_report(model: NetworkModel, out_dir, solver: str = "dense") -> list[Path]:
    """Solve the model and write probability/share tables with a bar figure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    solution = solve_choice_matrix(model, solver=solver)
    written = []

    written.append(_write_csv(
        out / "choice_probabilities.csv",
        ["agent", *model.choices],
        [[model.agents[i], *(f"{v:.12g}" for v in solution.pi[i])]
         for i in range(model.n_agents)],
    ))
    written.append(_write_csv(
        out / "choice_shares.csv",
        ["choice", "share"],
        [[c, f"{v:.12g}"] for c, v in zip(model.choices, solution.choice_shares)],
    ))
    written.append(_write_csv(
        out / "agent_summary.csv",
        ["agent", "centrality", "decisiveness", "decision_share"],
        [[model.agents[i], f"{solution.centrality[i]:.12g}",
          f"{solution.decisiveness[i]:.12g}", f"{solution.decision_shares[i]:.12g}"]
         for i in range(model.n_agents)],
    ))

    fig, (ax_choice, ax_agent) = plt.subplots(1, 2, figsize=(10, 4))
    ax_choice.bar(model.choices, solution.choice_shares, color="#4878d0")
    ax_choice.set_title("Choice shares")
    ax_choice.set_ylabel("share of total endowment")
    ax_agent.bar(model.agents, solution.decision_shares, color="#ee854a")
    ax_agent.set_title("Decision shares")
    ax_agent.set_ylabel("share decided by agent")
    for ax in (ax_choice, ax_agent):
        ax.tick_params(axis="x", rotation=45)
    fig.tight_layout()
    figure_path = out / "shares.png"
    fig.savefig(figure_path, dpi=150)
    plt.close(fig)
    written.append(figure_path)
    return written


def render_herding_report(d_max: int, total: int, trials: int, seed: int,
                          out_dir) -> list[Path]:
    """Compare the largest-herd limit curve against urn simulation, with figure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = list(range(1, d_max + 1))
    limits = [expected_max_herd_fraction(d) for d in ds]
    summaries = [simulate_urn(d, total, trials, seed + d) for d in ds]

    rows = []
    for d, limit, summary in zip(ds, limits, summaries):
        rows.append([
            d, f"{limit:.12g}", f"{summary.mean_max_fraction:.12g}",
            *(f"{summary.quantiles[q]:.12g}" for q in (0.05, 0.2, 0.8, 0.95)),
        ])
    written = [_write_csv(
        out / "herding.csv",
        ["decisive", "limit_mean", "sim_mean", "q05", "q20", "q80", "q95"],
        rows,
    )]

    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(ds, limits, color="#1f77b4", label="limit expectation")
    means = [s.mean_max_fraction for s in summaries]
    ax.plot(ds, means, "o", color="#d62728", markersize=4, label="simulation mean")
    for levels, style, label in (((0.2, 0.8), "--", "quantiles 0.2/0.8"),
                                 ((0.05, 0.95), "-.", "quantiles 0.05/0.95")):
        for pos, q in enumerate(levels):
            ax.plot(ds, [s.quantiles[q] for s in summaries], style, color="#8c564b",
                    linewidth=1, label=label if pos == 0 else None)
    ax.set_xlabel("decisive agents")
    ax.set_ylabel("largest herd / population")
    ax.set_ylim(0, 1.02)
    ax.set_title(f"Largest-herd fraction (population {total}, {trials} trials)")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    figure_path = out / "herding.png"
    fig.savefig(figure_path, dpi=150)
    plt.close(fig)
    written.append(figure_path)
    return written
