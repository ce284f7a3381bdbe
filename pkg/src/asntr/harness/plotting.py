"""PNG figures for ``compare``: seed-mean curves against N_g and event portions."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from ..trace import EVENTS  # noqa: E402

CURVES = (
    ("train_loss", "training loss (mini-batch)", "compare_train_loss.png", True),
    ("test_accuracy", "test accuracy [%]", "compare_test_accuracy.png", False),
    ("N_k", "mini-batch size N_k", "compare_batch_size.png", True),
)
STYLE = {"asntr": dict(color="tab:blue"), "storm_like": dict(color="tab:orange", ls="--")}


def render_comparison(directory, metrics, event_rows):
    from .compare import mean_curve

    directory = Path(directory)
    written = []
    for metric, label, fname, logy in CURVES:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        drawn = False
        for opt, rows_by_seed in metrics.items():
            curve = mean_curve(rows_by_seed, metric)
            if curve is None:
                continue
            ax.plot(*curve, label=opt, **STYLE.get(opt, {}))
            drawn = True
        if drawn:
            ax.set_xlabel("N_g")
            ax.set_ylabel(label)
            if logy:
                ax.set_yscale("log")
            ax.legend()
            fig.tight_layout()
            fig.savefig(directory / fname, dpi=100)
            written.append(directory / fname)
        plt.close(fig)

    pooled = [r for r in event_rows if r["optimizer"] == "asntr" and r["seed"] == "all"]
    if pooled:
        fig, ax = plt.subplots(figsize=(4, 3))
        ax.bar(EVENTS, [pooled[0][e] for e in EVENTS], color="tab:blue")
        ax.set_ylabel("iterations [%]")
        ax.set_title("asntr sampling events")
        fig.tight_layout()
        fig.savefig(directory / "events.png", dpi=100)
        plt.close(fig)
        written.append(directory / "events.png")
    return written
