"""
Emit a standalone matplotlib script that plots the results of a
``simulate`` run. The script is plain text; matplotlib is only needed to
run it.
"""

import os
from string import Template

PLOT_SCRIPT_NAME = "plot.py"

_TEMPLATE = Template(
    '''"""Plot the results of an lgslam simulation ($title)."""

import csv
import os

import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def read(name):
    with open(os.path.join(HERE, name)) as csv_file:
        rows = list(csv.reader(csv_file))
    header, values = rows[0], rows[1:]
    return {
        column: [float(row[i]) for row in values] for i, column in enumerate(header)
    }


metrics = read("$metrics")
run = read("$run")
landmarks = read("$landmarks")

panels = [
    ("err_rot_deg", "rotation error (deg)"),
    ("err_pos_m", "position error (m)"),
    ("err_vel_mps", "velocity error (m/s)"),
    ("err_grav_mps2", "gravity error (m/s^2)"),
    ("landmark_rmse_m", "landmark RMSE (m)"),
    ("norm_x", "|x|"),
]
figure, axes = plt.subplots(len(panels), 1, sharex=True, figsize=(7, 11))
for axis, (column, label) in zip(axes, panels):
    axis.plot(metrics["t"], metrics[column])
    axis.set_ylabel(label)
    axis.set_yscale("$scale")
    axis.grid(True)
axes[-1].set_xlabel("t (s)")
figure.tight_layout()
figure.savefig(os.path.join(HERE, "errors.png"))

figure = plt.figure(figsize=(7, 7))
axis = figure.add_subplot(projection="3d")
axis.plot(run["p_x"], run["p_y"], run["p_z"], label="true trajectory")
axis.plot(
    run["p_hat_x"], run["p_hat_y"], run["p_hat_z"], "--", label="aligned estimate"
)
for i in range(1, $n + 1):
    axis.plot(
        run["lm%d_hat_x" % i],
        run["lm%d_hat_y" % i],
        run["lm%d_hat_z" % i],
        color="grey",
        linewidth=0.5,
    )
axis.scatter(landmarks["x"], landmarks["y"], landmarks["z"], marker="*", color="k")
axis.set_xlabel("x (m)")
axis.set_ylabel("y (m)")
axis.set_zlabel("z (m)")
axis.legend()
figure.savefig(os.path.join(HERE, "trajectory.png"))
plt.show()
'''
)


def render_plot_script(
    n: int,
    title: str = "",
    metrics: str = "metrics.csv",
    run: str = "run.csv",
    landmarks: str = "landmarks.csv",
    log_scale: bool = True,
) -> str:
    """The source code of the plotting script.

    :param n: The number of landmarks in ``run``.
    :param log_scale: Plot the errors on a logarithmic axis.
    """
    return _TEMPLATE.substitute(
        title=title or "{} landmarks".format(n),
        metrics=metrics,
        run=run,
        landmarks=landmarks,
        n=n,
        scale="log" if log_scale else "linear",
    )


def write_plot_script(directory: str, n: int, **kwargs) -> str:
    """:return: The path of the written script."""
    path = os.path.join(directory, PLOT_SCRIPT_NAME)
    with open(path, "w") as script:
        script.write(render_plot_script(n, **kwargs))
    return path
