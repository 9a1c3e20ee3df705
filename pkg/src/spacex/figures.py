"""Optional PNG charts drawn from the plot CSVs.

Needs matplotlib (the ``figures`` extra).  Charts are drawn only from
files under ``plots/`` so they never show a number the CSVs do not hold.
"""

from __future__ import annotations

from pathlib import Path

from .serialize import read_csv

# drop the version string so identical data gives identical files
_PNG_METADATA = {"Software": None}


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:
        raise RuntimeError("figures need matplotlib: pip install 'artifact[figures]'") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_METADATA)
    return path


def render_figures(plots_dir: Path, out_dir: Path) -> list[Path]:
    plt = _pyplot()
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    pairs = plots_dir / "pairs_top10.csv"
    if pairs.is_file() and (rows := read_csv(pairs)):
        fig, ax = plt.subplots(figsize=(7, 4))
        labels = [f"{r['author_a']} / {r['author_b']}" for r in rows][::-1]
        ax.barh(labels, [int(r["events"]) for r in rows][::-1], color="#4c72b0")
        ax.set_xlabel("events")
        ax.set_title("Top communication pairs")
        written.append(_save(fig, out_dir / "pairs_top10.png"))
        plt.close(fig)

    hist = plots_dir / "time_diff_histogram.csv"
    if hist.is_file() and (rows := read_csv(hist)):
        fig, ax = plt.subplots(figsize=(7, 3.5))
        ax.bar([float(r["bucket_start_hour"]) for r in rows], [int(r["count"]) for r in rows],
               width=1.0, align="edge", color="#55a868", edgecolor="white")
        ax.set_xlabel("hours between paired commits")
        ax.set_ylabel("events")
        written.append(_save(fig, out_dir / "time_diff_histogram.png"))
        plt.close(fig)

    for path in sorted(plots_dir.glob("correlation_*.csv")):
        rows = read_csv(path)
        names = list(dict.fromkeys(r["row"] for r in rows))
        k = len(names)
        grid = [[float(rows[i * k + j]["r"]) for j in range(k)] for i in range(k)]
        fig, ax = plt.subplots(figsize=(1.2 * k + 2, 1.2 * k + 1))
        image = ax.imshow(grid, vmin=-1, vmax=1, cmap="RdBu_r")
        ax.set_xticks(range(k), names, rotation=45, ha="right")
        ax.set_yticks(range(k), names)
        for i in range(k):
            for j in range(k):
                ax.text(j, i, f"{grid[i][j]:.2f}", ha="center", va="center", fontsize=8)
        fig.colorbar(image, ax=ax, shrink=0.8)
        written.append(_save(fig, out_dir / f"{path.stem}.png"))
        plt.close(fig)

    cps = plots_dir / "cps_ranking.csv"
    if cps.is_file() and (rows := read_csv(cps)):
        fig, ax = plt.subplots(figsize=(7, 0.35 * len(rows) + 1.5))
        labels = [f"{r['author']} ({r['project']})" for r in rows][::-1]
        values = [float(r["cps"]) for r in rows][::-1]
        ax.barh(labels, values, color=["#c44e52" if v < 0 else "#4c72b0" for v in values])
        ax.axvline(0, color="black", linewidth=0.8)
        ax.set_xlabel("CPS")
        written.append(_save(fig, out_dir / "cps_ranking.png"))
        plt.close(fig)
    return written
