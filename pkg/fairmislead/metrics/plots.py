"""
Fair deepfake detection by misleading learning (fairmislead)
https://github.com/fairmislead/fairmislead

Copyright (C) 2026 The fairmislead contributors

This program is free software: you can redistribute it and/or modify
it under the terms of the GNU Affero General Public License as published by
the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.

This program is distributed in the hope that it will be useful,
but WITHOUT ANY WARRANTY; without even the implied warranty of
MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
GNU Affero General Public License for more details.

You should have received a copy of the GNU Affero General Public License
along with this program.  If not, see <https://www.gnu.org/licenses/>.
"""

import logging
import os
from collections import OrderedDict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from fairmislead.metrics.metrics import robustness_delta  # noqa: E402
from fairmislead.metrics.report import EmptyReport, report_context  # noqa: E402

logger = logging.getLogger("fairmislead")

BAR_METRICS = (("auc", "AUC"), ("fpr", "FPR"))


def _gap_annotation(ax, values, x_positions):
    """
    Arrow between the highest and the lowest bar, labelled with the gap
    """
    defined = [(v, x) for v, x in zip(values, x_positions) if v is not None]
    if len(defined) < 2:
        return
    high, x_high = max(defined)
    low, x_low = min(defined)
    x_arrow = max(x_positions) + 0.6
    ax.annotate(
        "",
        xy=(x_arrow, low),
        xytext=(x_arrow, high),
        arrowprops=dict(arrowstyle="<->", color="crimson"),
    )
    ax.hlines([high, low], [x_high, x_low], x_arrow, colors="crimson", linestyles="dotted")
    ax.text(x_arrow + 0.1, (high + low) / 2.0, "gap {:.3f}".format(high - low), color="crimson")


def plot_group_bars(named_reports, out_dir, prefix="groups"):
    """
    Per-group AUC and FPR bars, one series per report, each series
    annotated with its max-min gap
    :param named_reports: sequence of (name, MetricsReport)
    :return: paths of the AUC and the FPR chart
    :rtype: list
    """
    if not named_reports:
        raise EmptyReport("nothing to plot")
    groups = list()
    for _, report in named_reports:
        for group in report.per_group:
            if group not in groups:
                groups.append(group)
    x = np.arange(len(groups))
    width = 0.8 / len(named_reports)
    paths = list()
    for metric, label in BAR_METRICS:
        fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(groups) + 2), 4))
        for i, (name, report) in enumerate(named_reports):
            values = [report.per_group.get(g, {}).get(metric) for g in groups]
            offsets = x - 0.4 + width * (i + 0.5)
            ax.bar(
                offsets,
                [np.nan if v is None else v for v in values],
                width=width,
                label=name,
            )
            _gap_annotation(ax, values, list(offsets))
        ax.set_xticks(x)
        ax.set_xticklabels(groups)
        ax.set_ylabel(label)
        ax.set_ylim(0, 1.05)
        ax.set_title("{} per group".format(label))
        if len(named_reports) > 1:
            ax.legend()
        fig.tight_layout()
        path = os.path.join(out_dir, "{}.{}.png".format(prefix, metric))
        fig.savefig(path, dpi=100)
        plt.close(fig)
        logger.info("[PLOT] Wrote {}".format(path))
        paths.append(path)
    return paths


def plot_deltas(clean, perturbed, out_dir, prefix="robustness"):
    """
    Delta F_FPR and delta F_MAG of every perturbed report against the
    clean one, one x tick per disturbance
    :param clean: clean MetricsReport
    :param perturbed: sequence of (disturbance label, MetricsReport)
    :return: path of the chart
    """
    if not perturbed:
        raise EmptyReport("no perturbed reports to plot")
    labels = [label for label, _ in perturbed]
    deltas = [robustness_delta(clean, report) for _, report in perturbed]
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(max(6, 0.9 * len(labels) + 2), 4))
    for i, (key, name) in enumerate((("delta_f_fpr", "ΔF_FPR"), ("delta_f_mag", "ΔF_MAG"))):
        values = [np.nan if d[key] is None else d[key] for d in deltas]
        ax.bar(x - 0.2 + 0.4 * i, values, width=0.4, label=name)
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xticks(x)
    ax.set_xticklabels(labels)
    ax.set_ylabel("perturbed - clean")
    ax.legend()
    fig.tight_layout()
    path = os.path.join(out_dir, "{}.deltas.png".format(prefix))
    fig.savefig(path, dpi=100)
    plt.close(fig)
    logger.info("[PLOT] Wrote {}".format(path))
    return path


def plot_reports(named_reports, out_dir):
    """
    Group bar charts for the clean reports (all reports when none is
    clean) and one delta chart per clean report that has perturbed
    counterparts of the same dataset, split, stage and grouping
    :return: written paths
    """
    if not named_reports:
        raise EmptyReport("nothing to plot")
    os.makedirs(out_dir, exist_ok=True)
    clean = [(n, r) for n, r in named_reports if not r.metadata.get("perturbation")]
    perturbed = [(n, r) for n, r in named_reports if r.metadata.get("perturbation")]
    paths = plot_group_bars(clean or named_reports, out_dir)

    bases = OrderedDict()
    for name, report in clean:
        bases[report_context(report)] = (name, report)
    charts = list()
    for context, (name, base) in bases.items():
        matching = [
            (r.metadata["perturbation"], r)
            for _, r in perturbed
            if report_context(r) == context
        ]
        if matching:
            charts.append((name, base, matching))
    for name, base, matching in charts:
        prefix = "robustness" if len(charts) == 1 else "robustness.{}".format(name)
        paths.append(plot_deltas(base, matching, out_dir, prefix=prefix))
    unmatched = sum(1 for _, r in perturbed if report_context(r) not in bases)
    if unmatched:
        logger.warning(
            "[PLOT] {} perturbed reports have no clean report of the same "
            "dataset, split and stage".format(unmatched)
        )
    return paths
