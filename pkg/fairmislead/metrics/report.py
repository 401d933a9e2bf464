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

import csv
import json
import logging
import os

import jsonschema

from fairmislead.constants import (
    COMPARISON_CSV_HEADER,
    DELTAS_CSV_HEADER,
    PREDICTIONS_HEADER,
    REPORT_CSV_HEADER,
    SUMMARY_TEMPLATE,
)
from fairmislead.data.manifest import (
    BadScore,
    DemographicKey,
    PredictionRecord,
    parse_label,
    parse_method,
)
from fairmislead.errors import DataError, LineError
from fairmislead.lib.utils import read_parse_and_write_template
from fairmislead.metrics.metrics import MetricsReport, robustness_delta

logger = logging.getLogger("fairmislead")

SCHEMA_PATH = os.path.join(
    os.path.dirname(os.path.dirname(__file__)), "data", "report.schema.json"
)


class ReportSchemaError(DataError):
    pass


class EmptyReport(DataError):
    pass


class BadPrediction(LineError):
    pass


def load_schema():
    with open(SCHEMA_PATH) as r:
        return json.load(r)


def validate_report_dict(data):
    try:
        jsonschema.validate(instance=data, schema=load_schema())
    except jsonschema.ValidationError as e:
        raise ReportSchemaError(
            "report does not match the schema at {}: {}".format(
                "/".join(str(p) for p in e.absolute_path) or "<root>", e.message
            )
        )


def write_report_json(report, path):
    data = report.to_dict()
    validate_report_dict(data)
    with open(path, "w", encoding="utf-8") as w:
        json.dump(data, w, indent=2)
        w.write("\n")
    logger.info("[REPORT] Report written to {}".format(path))


def read_report_json(path):
    """
    :rtype: MetricsReport
    """
    if not os.path.isfile(path):
        raise EmptyReport("report not found: {}".format(path))
    with open(path, encoding="utf-8") as r:
        try:
            data = json.load(r)
        except ValueError as e:
            raise ReportSchemaError("{} is not JSON: {}".format(path, e))
    validate_report_dict(data)
    return MetricsReport.from_dict(data)


def _cell(value):
    return "" if value is None else repr(value)


def write_report_csv(report, path):
    """
    One row per group plus a trailing "overall" row
    """
    with open(path, "w", newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(REPORT_CSV_HEADER)
        rows = list(report.per_group.items()) + [("overall", report.overall)]
        for name, row in rows:
            writer.writerow([name] + [_cell(row[k]) for k in REPORT_CSV_HEADER[1:]])


def write_predictions(records, path):
    """
    Prediction CSV ordered by sample_id, scores written with repr so
    they read back bit-identical
    """
    with open(path, "w", newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(PREDICTIONS_HEADER)
        for r in sorted(records, key=lambda r: r.sample_id):
            writer.writerow(
                (
                    r.sample_id,
                    repr(float(r.score)),
                    str(int(r.label)),
                    r.subgroup.gender.value,
                    r.subgroup.race.value,
                    r.method.value if r.method is not None else "",
                )
            )


def read_predictions(path):
    """
    :rtype: list of PredictionRecord
    """
    if not os.path.isfile(path):
        raise DataError("predictions file not found: {}".format(path))
    records = list()
    with open(path, newline="", encoding="utf-8") as fp:
        reader = csv.DictReader(fp)
        missing = [c for c in PREDICTIONS_HEADER if c not in (reader.fieldnames or [])]
        if missing:
            raise DataError("{} is missing column(s): {}".format(path, ", ".join(missing)))
        for row in reader:
            line = reader.line_num
            try:
                score = float(row["score"])
            except ValueError:
                raise BadPrediction("score {!r} is not a number".format(row["score"]), line)
            label = parse_label(row["label"], line)
            try:
                records.append(
                    PredictionRecord(
                        sample_id=row["sample_id"],
                        score=score,
                        label=label,
                        subgroup=DemographicKey.from_parts(row["gender"], row["race"], line),
                        method=parse_method(row["method"], label, line),
                    )
                )
            except BadScore as e:
                raise BadPrediction(str(e), line)
    return records


def comparison_row(name, report):
    meta = report.metadata
    return (
        name,
        meta.get("dataset") or "",
        meta.get("split") or "",
        meta.get("perturbation") or "clean",
        meta.get("stage") or "",
        report.group_by,
        repr(report.threshold),
        _cell(report.overall["auc"]),
        _cell(report.overall["acc"]),
        _cell(report.overall["fpr"]),
        _cell(report.fairness["f_fpr"]),
        _cell(report.fairness["f_mag_auc"]),
        _cell(report.fairness["f_mag_acc"]),
        _cell(report.fairness["f_meo"]),
    )


def delta_rows(named_reports):
    """
    robustness_delta of every perturbed report against the clean report
    of the same dataset, split and checkpoint stage
    """
    clean = dict()
    for name, report in named_reports:
        if not report.metadata.get("perturbation"):
            clean[report_context(report)] = report
    rows = list()
    for name, report in named_reports:
        perturbation = report.metadata.get("perturbation")
        base = clean.get(report_context(report))
        if not perturbation or base is None:
            continue
        delta = robustness_delta(base, report)
        rows.append((name, perturbation) + tuple(_cell(delta[k]) for k in DELTAS_CSV_HEADER[2:]))
    return rows


def report_context(report):
    """
    Dataset, split, checkpoint stage, grouping and threshold of a report;
    a perturbed report is compared only with the clean report sharing it
    """
    meta = report.metadata
    return (
        meta.get("dataset"),
        meta.get("split"),
        meta.get("stage"),
        report.group_by,
        report.threshold,
    )


def write_comparison(named_reports, out_dir):
    """
    Writes comparison.csv, deltas.csv and summary.html into out_dir
    :param named_reports: sequence of (name, MetricsReport)
    :return: the three paths
    """
    if not named_reports:
        raise EmptyReport("no reports to compare")
    os.makedirs(out_dir, exist_ok=True)
    comparison = [comparison_row(name, report) for name, report in named_reports]
    deltas = delta_rows(named_reports)

    comparison_path = os.path.join(out_dir, "comparison.csv")
    with open(comparison_path, "w", newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(COMPARISON_CSV_HEADER)
        writer.writerows(comparison)
    deltas_path = os.path.join(out_dir, "deltas.csv")
    with open(deltas_path, "w", newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(DELTAS_CSV_HEADER)
        writer.writerows(deltas)

    summary_path = os.path.join(out_dir, "summary.html")
    read_parse_and_write_template(
        SUMMARY_TEMPLATE,
        output_path=summary_path,
        comparison_header=COMPARISON_CSV_HEADER,
        comparison=comparison,
        deltas_header=DELTAS_CSV_HEADER,
        deltas=deltas,
        reports=[(name, report.to_dict()) for name, report in named_reports],
    )
    return comparison_path, deltas_path, summary_path
