"""Compare recommendation strategies across repeats and render figures.

The sweep runs several strategies with a few seeds each and merges every
per-round metric into one long-format CSV (strategy,run,round,metric,value).
If the companion plotting package `newsim-plots` is installed (it lives in
frontend/ and is installed separately), the script also renders metric
trajectories with a +/-1 standard deviation band per strategy.
"""

import os
import subprocess
import sys
import tempfile

out_dir = os.path.join(tempfile.mkdtemp(prefix="newsim-demo-"), "sweep")
config_path = os.path.join(os.path.dirname(out_dir), "sweep.cfg")
with open(config_path, "w", encoding="utf-8") as fh:
    fh.write(
        "seed = 3\n"
        "n_users = 200\n"
        "n_creators = 30\n"
        "rounds = 8\n"
        "active_rounds = 3\n"
        "n_click = 5\n"
        "d_embed = 16\n"
    )

cmd = [
    sys.executable,
    "-m",
    "newsim.cli",
    "sweep",
    "--config",
    config_path,
    "--strategies",
    "default,breaking,promo-creator",
    "--repeats",
    "2",
    "--out-dir",
    out_dir,
]
print("running:", " ".join(cmd))
subprocess.run(cmd, check=True)

merged = os.path.join(out_dir, "merged.csv")
with open(merged, encoding="utf-8") as fh:
    lines = fh.readlines()
print(f"\n{merged}: {len(lines) - 1} metric rows")
print("".join(lines[:4]), "...")

try:
    from newsim_plots import FigureSpec, plot_metrics
except ImportError:
    print("newsim-plots not installed; skipping figure rendering")
    print("  (pip install -e frontend --no-build-isolation)")
    sys.exit(0)

fig_path = os.path.join(out_dir, "trajectories.png")
result = plot_metrics(
    merged,
    FigureSpec(
        metrics=["total_likes", "avg_quality", "gini_creators", "jaccard"],
        out_path=fig_path,
        n_cols=2,
    ),
)
print(f"\nwrote {result['path']}")
for series in result["series"]["avg_quality"]:
    print(
        f"  avg_quality[{series.group}]: "
        f"final mean {series.mean[-1]:.3f} +/- {series.std[-1]:.3f} "
        f"({series.n_runs} runs)"
    )
