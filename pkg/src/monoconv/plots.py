"""Figure rendering for the report paths.

Figures are written next to the delimited output with the same stem; the
CSV stays the primary artifact and plotting can be switched off.
"""

from __future__ import annotations

from pathlib import Path


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def render_stability_figure(report, csv_path) -> Path:
    """Outside-mass decay per eps with SE bars and the Chebyshev bounds."""
    plt = _pyplot()
    out = Path(csv_path).with_suffix("").parent / (Path(csv_path).stem + "_decay.png")
    eps_values = sorted({row.eps for row in report.rows})
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for i, eps in enumerate(eps_values):
        color = colors[i % len(colors)]
        mc = [r for r in report.rows if r.eps == eps and r.method == "mc"]
        if mc:
            ax.errorbar([r.n for r in mc], [r.outside_mass for r in mc],
                        yerr=[r.std_err for r in mc], marker="o", color=color,
                        label=f"mc, eps={eps:g}")
            finite = [(r.n, r.cheb_bound) for r in mc if r.cheb_bound != float("inf")]
            if finite:
                ax.plot([n for n, _ in finite], [min(b, 1.0) for _, b in finite],
                        linestyle=":", color=color, alpha=0.6)
        exact = [r for r in report.rows if r.eps == eps and r.method == "exact"]
        if exact:
            ax.plot([r.n for r in exact], [r.outside_mass for r in exact],
                    marker="s", linestyle="--", color=color, alpha=0.8,
                    label=f"exact, eps={eps:g}")
    ax.set_xscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("mass outside |t - a_n| < eps")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title("Decay of the rescaled sequence tails (dotted: Chebyshev bound)")
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def render_second_moment_figure(second_report, csv_path) -> Path:
    """Empirical E[S_n^2] against the analytic partial sums."""
    plt = _pyplot()
    out = Path(csv_path).with_suffix("").parent / (Path(csv_path).stem + "_smoment.png")
    steps = [r.step for r in second_report.rows]
    emp = [r.empirical for r in second_report.rows]
    ses = [r.se for r in second_report.rows]
    exact = [r.expected for r in second_report.rows]
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.errorbar(steps, emp, yerr=[4.0 * s for s in ses], marker="o", markersize=3,
                linestyle="", label="empirical mean of S_n^2 (4 SE bars)")
    ax.plot(steps, exact, linestyle="-", color="black",
            label="partial sums of var/b^2")
    ax.set_xlabel("n")
    ax.set_ylabel("second moment")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title("Martingale second moment against the exact series")
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out
