"""Gnuplot scripts for the CSV reports written by `run_experiment`."""

from __future__ import annotations

from pathlib import Path

_COMMON = "set datafile separator ','\nset key outside\n"

FIG_COST = _COMMON + """set terminal pngcairo size 900,600
set output 'fig_cost.png'
set multiplot layout 2,1
set style data histograms
set style fill solid 0.6
set ylabel 'mean cost'
plot 'summary.csv' every ::1 using 3:xtic(sprintf('(%g,%g)',$1,$2)) title 'conventional', \\
     '' every ::1 using 4 title 'invariant', \\
     '' every ::1 using 0:4:(sprintf('(%.0f%%)',$5)) with labels offset 0,1 notitle
set ylabel 'lost trajectories'
plot 'summary.csv' every ::1 using 6:xtic(sprintf('(%g,%g)',$1,$2)) title 'conventional', \\
     '' every ::1 using 7 title 'invariant'
unset multiplot
"""

FIG_KL = _COMMON + """set terminal pngcairo size 900,400
set output 'fig_kl.png'
set logscale y
set style data histograms
set style fill solid 0.6
set ylabel 'symmetric KL'
plot 'kl.csv' every ::1 using 4:xtic(sprintf('(%g,%g)',$1,$2)) title 'conventional', \\
     '' every ::1 using 3 title 'invariant'
"""

FIG_PREDICTION = _COMMON + """set terminal pngcairo size 900,600
set output 'fig_prediction.png'
set xlabel 't (steps)'
set ylabel 'covariance entry (global frame)'
plot for [c=3:8] 'prediction_inv.csv' every ::1 using 1:c with lines title columnheader(c).' inv', \\
     for [c=3:8] 'prediction_conv.csv' every ::1 using 1:c with points pt 7 ps 0.2 title columnheader(c).' conv'
"""

FIG_TRAJECTORY = _COMMON + """set terminal pngcairo size 700,700
set output 'fig_trajectory_{trial}.png'
set size ratio -1
plot 'trajectory_inv_{trial}.csv' every ::1 using 8:9 with lines lw 2 title 'reference', \\
     'trajectory_inv_{trial}.csv' every ::1 using 2:3 with lines title 'invariant LQG', \\
     'trajectory_conv_{trial}.csv' every ::1 using 2:3 with lines title 'conventional LQG'
"""


def write_plot_scripts(directory) -> list[Path]:
    """Write a .gp script next to each report found in `directory`."""
    d = Path(directory)
    written = []
    for name, data, script in (
        ("fig_cost.gp", "summary.csv", FIG_COST),
        ("fig_kl.gp", "kl.csv", FIG_KL),
        ("fig_prediction.gp", "prediction_inv.csv", FIG_PREDICTION),
    ):
        if (d / data).exists():
            (d / name).write_text(script)
            written.append(d / name)
    for f in sorted(d.glob("trajectory_inv_*.csv")):
        trial = f.stem.rsplit("_", 1)[1]
        if (d / f"trajectory_conv_{trial}.csv").exists():
            p = d / f"fig_trajectory_{trial}.gp"
            p.write_text(FIG_TRAJECTORY.format(trial=trial))
            written.append(p)
    return written
