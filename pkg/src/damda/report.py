"""Figure rendering for the CLI report paths.

Every figure is drawn from the same rows that feed the delimited output and
is written next to it. Rendering is side-effect free apart from the file.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def render_bic_by_h(rows: list[dict], path) -> None:
    """Line plot of BIC against the candidate hidden-class count."""
    fitted = [(r["H"], r["bic"]) for r in rows if r.get("bic") is not None]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    if fitted:
        hs, bics = zip(*sorted(fitted))
        ax.plot(hs, bics, "o-", color="tab:blue")
        best = max(fitted, key=lambda t: t[1])
        ax.axvline(best[0], color="tab:red", ls="--", lw=0.8)
        ax.set_xticks(list(hs))
    ax.set_xlabel("hidden classes H")
    ax.set_ylabel("BIC")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_selection_history(history: list[dict], path) -> None:
    """Accepted-step BIC gains over the course of the greedy search."""
    accepted = [r for r in history if r["action"] in ("add", "remove")]
    fig, ax = plt.subplots(figsize=(6, 3.2))
    if accepted:
        steps = [r["step"] for r in accepted]
        deltas = [r["delta_bic"] for r in accepted]
        colors = ["tab:green" if r["action"] == "add" else "tab:orange"
                  for r in accepted]
        ax.bar(range(len(accepted)), deltas, color=colors, tick_label=steps)
        for idx, r in enumerate(accepted):
            ax.annotate(f'{"+" if r["action"] == "add" else "-"}{r["var"]}',
                        (idx, deltas[idx]), ha="center", va="bottom", fontsize=7,
                        rotation=60)
    ax.set_xlabel("search step")
    ax.set_ylabel("BIC gain")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_selection_frequencies(freq_rows: list[dict], path) -> None:
    """Per-variable selection frequency across study replicates, colored by role."""
    fig, ax = plt.subplots(figsize=(max(6, 0.18 * len(freq_rows)), 3.2))
    palette = {"Gen": "tab:green", "Cor": "tab:orange", "Noi": "tab:gray"}
    xs = range(len(freq_rows))
    ax.bar(xs, [r["frequency"] for r in freq_rows],
           color=[palette.get(r["role"], "tab:blue") for r in freq_rows])
    ax.set_xticks(list(xs))
    ax.set_xticklabels([r["variable"] for r in freq_rows], rotation=90, fontsize=6)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("selection frequency")
    handles = [plt.Rectangle((0, 0), 1, 1, color=c) for c in palette.values()]
    ax.legend(handles, palette.keys(), fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_metrics(rows: list[dict], path) -> None:
    """ARI per replicate plus the distribution of selected hidden-class counts."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7, 3.2))
    if rows:
        ax1.plot([r["replicate"] for r in rows], [r["ari"] for r in rows],
                 "o", color="tab:blue", ms=4)
    ax1.set_xlabel("replicate")
    ax1.set_ylabel("ARI")
    ax1.set_ylim(-0.05, 1.05)
    hs = [r["H_selected"] for r in rows]
    if hs:
        values = sorted(set(hs))
        ax2.bar(values, [hs.count(v) for v in values], color="tab:purple")
        ax2.set_xticks(values)
    ax2.set_xlabel("selected H")
    ax2.set_ylabel("replicates")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
