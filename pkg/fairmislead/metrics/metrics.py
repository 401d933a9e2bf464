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
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from fairmislead.constants import DEFAULT_THRESHOLD
from fairmislead.data.manifest import DemographicKey, Label, Method
from fairmislead.errors import DataError

logger = logging.getLogger("fairmislead")

GROUP_BY = ("subgroup", "method")
MAG_METRICS = ("auc", "acc")


class SingleClass(DataError):
    """
    Raised when AUC is requested on records of a single true class
    """

    pass


class NoRealSamples(DataError):
    pass


class FewerThanTwoGroups(DataError):
    pass


class NoValidGroupPair(DataError):
    pass


class MismatchedReports(DataError):
    pass


class BadGroupBy(DataError):
    pass


def roc_auc_scores(scores, labels):
    """
    Mann-Whitney AUC: P(score_fake > score_real) + 1/2 P(tie)
    :param scores: sequence of scores
    :param labels: sequence of 0/1 labels
    :rtype: float
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    fakes = scores[labels == int(Label.FAKE)]
    reals = np.sort(scores[labels == int(Label.REAL)])
    if not len(fakes) or not len(reals):
        raise SingleClass("AUC needs at least one real and one fake record")
    below = np.searchsorted(reals, fakes, side="left")
    ties = np.searchsorted(reals, fakes, side="right") - below
    wins = int(below.sum()) + 0.5 * int(ties.sum())
    return wins / (len(fakes) * len(reals))


def roc_auc(records):
    """
    >>> from fairmislead.data.manifest import PredictionRecord, DemographicKey
    >>> key = DemographicKey.parse("M-W")
    >>> fake = PredictionRecord("a", 0.9, Label.FAKE, key)
    >>> real = PredictionRecord("b", 0.1, Label.REAL, key)
    >>> roc_auc([fake, real])
    1.0
    """
    return roc_auc_scores([r.score for r in records], [int(r.label) for r in records])


def predict(record, threshold=DEFAULT_THRESHOLD):
    """
    Hard decision: fake iff score >= threshold
    """
    return Label.FAKE if record.score >= threshold else Label.REAL


def fpr(records, threshold=DEFAULT_THRESHOLD):
    reals = [r for r in records if r.label == Label.REAL]
    if not reals:
        raise NoRealSamples("false positive rate needs at least one real record")
    return sum(1 for r in reals if predict(r, threshold) == Label.FAKE) / len(reals)


def accuracy(records, threshold=DEFAULT_THRESHOLD):
    if not records:
        raise DataError("accuracy of an empty record set")
    return sum(1 for r in records if predict(r, threshold) == r.label) / len(records)


def group_records(records, group_by="subgroup"):
    """
    Records split into groups. By subgroup every record goes to its
    demographic key; by method each group holds one forgery method's fakes
    plus every real record.
    :return: group name -> records, groups in canonical order, empty
    groups left out
    :rtype: OrderedDict
    """
    if group_by == "subgroup":
        groups = OrderedDict((str(k), []) for k in DemographicKey.all())
        for r in records:
            groups[str(r.subgroup)].append(r)
    elif group_by == "method":
        reals = [r for r in records if r.label == Label.REAL]
        groups = OrderedDict((m.value, list(reals)) for m in Method)
        for r in records:
            if r.label == Label.FAKE:
                if r.method is None:
                    raise DataError(
                        "fake record {} has no method to group by".format(r.sample_id)
                    )
                groups[r.method.value].append(r)
        groups = OrderedDict(
            (k, v) for k, v in groups.items() if any(r.label == Label.FAKE for r in v)
        )
    else:
        raise BadGroupBy("group_by must be subgroup or method, got {!r}".format(group_by))
    return OrderedDict((k, v) for k, v in groups.items() if v)


def _has_both_classes(records):
    labels = set(r.label for r in records)
    return Label.REAL in labels and Label.FAKE in labels


def f_fpr_detail(records, threshold=DEFAULT_THRESHOLD, group_by="subgroup"):
    """
    :return: (sum over groups of |FPR_g - FPR_overall|, excluded groups)
    """
    overall = fpr(records, threshold)
    total = 0.0
    excluded = list()
    for name, group in group_records(records, group_by).items():
        if not any(r.label == Label.REAL for r in group):
            excluded.append(name)
            continue
        total += abs(fpr(group, threshold) - overall)
    return total, excluded


def f_fpr(records, threshold=DEFAULT_THRESHOLD, group_by="subgroup"):
    return f_fpr_detail(records, threshold, group_by)[0]


def f_mag_detail(records, per_group_metric="auc", threshold=DEFAULT_THRESHOLD, group_by="subgroup"):
    """
    :return: (max - min of the per-group metric, excluded groups)
    """
    if per_group_metric not in MAG_METRICS:
        raise DataError("per_group_metric must be auc or acc, got {!r}".format(per_group_metric))
    groups = group_records(records, group_by)
    values = list()
    excluded = list()
    for name, group in groups.items():
        if per_group_metric == "auc":
            if not _has_both_classes(group):
                excluded.append(name)
                continue
            values.append(roc_auc(group))
        else:
            values.append(accuracy(group, threshold))
    if len(groups) <= 1:
        return 0.0, excluded
    if len(values) < 2:
        raise FewerThanTwoGroups(
            "F_MAG({}) needs two groups with a defined metric, got {}".format(
                per_group_metric, len(values)
            )
        )
    return max(values) - min(values), excluded


def f_mag(records, per_group_metric="auc", threshold=DEFAULT_THRESHOLD, group_by="subgroup"):
    return f_mag_detail(records, per_group_metric, threshold, group_by)[0]


def conditional_rates(records, threshold=DEFAULT_THRESHOLD):
    """
    P(Y_hat = k | Y = k') for k, k' in {0, 1}
    :rtype: dict
    """
    rates = dict()
    for true in Label:
        cond = [r for r in records if r.label == true]
        positives = sum(1 for r in cond if predict(r, threshold) == Label.FAKE)
        rates[(Label.FAKE, true)] = positives / len(cond)
        rates[(Label.REAL, true)] = (len(cond) - positives) / len(cond)
    return rates


def f_meo_detail(records, threshold=DEFAULT_THRESHOLD, group_by="subgroup"):
    """
    Largest across-group gap of P(Y_hat = k | Y = k', S = g) over the four
    (k, k') combinations. Groups without both classes are excluded.
    :return: (gap, excluded groups)
    """
    groups = group_records(records, group_by)
    rates = list()
    excluded = list()
    for name, group in groups.items():
        if not _has_both_classes(group):
            excluded.append(name)
            continue
        rates.append(conditional_rates(group, threshold))
    if len(groups) <= 1:
        return 0.0, excluded
    if len(rates) < 2:
        raise NoValidGroupPair(
            "F_MEO needs two groups holding both real and fake records, got {}".format(
                len(rates)
            )
        )
    gap = max(
        max(r[pair] for r in rates) - min(r[pair] for r in rates) for pair in rates[0]
    )
    return gap, excluded


def f_meo(records, threshold=DEFAULT_THRESHOLD, group_by="subgroup"):
    return f_meo_detail(records, threshold, group_by)[0]


@dataclass
class MetricsReport:
    """
    Detection and fairness metrics of one prediction set. Undefined
    values are None.
    """

    overall: Dict[str, Optional[float]]
    per_group: Dict[str, Dict[str, Optional[float]]]
    fairness: Dict[str, Optional[float]]
    threshold: float = DEFAULT_THRESHOLD
    group_by: str = "subgroup"
    exclusions: Dict[str, list] = field(default_factory=dict)
    metadata: Dict[str, Optional[str]] = field(default_factory=dict)

    def to_dict(self):
        return {
            "overall": dict(self.overall),
            "per_group": OrderedDict((k, dict(v)) for k, v in self.per_group.items()),
            "fairness": dict(self.fairness),
            "threshold": self.threshold,
            "group_by": self.group_by,
            "exclusions": {k: list(v) for k, v in self.exclusions.items()},
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            overall=dict(data["overall"]),
            per_group=OrderedDict((k, dict(v)) for k, v in data["per_group"].items()),
            fairness=dict(data["fairness"]),
            threshold=data["threshold"],
            group_by=data["group_by"],
            exclusions={k: list(v) for k, v in data.get("exclusions", {}).items()},
            metadata=dict(data.get("metadata", {})),
        )


def _safe(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except DataError:
        return None


def _group_row(group, threshold):
    return OrderedDict(
        (
            ("auc", roc_auc(group) if _has_both_classes(group) else None),
            ("acc", accuracy(group, threshold)),
            ("fpr", _safe(fpr, group, threshold)),
            ("n_real", sum(1 for r in group if r.label == Label.REAL)),
            ("n_fake", sum(1 for r in group if r.label == Label.FAKE)),
        )
    )


def subgroup_report(records, threshold=DEFAULT_THRESHOLD, group_by="subgroup", metadata=None):
    """
    Overall, per-group and fairness metrics of a prediction set.
    A fairness metric that cannot be computed for lack of groups is
    reported as None and logged; missing reals or fakes overall raise.
    :param records: PredictionRecord sequence
    :param threshold: decision threshold for the rate-based metrics
    :param group_by: "subgroup" or "method"
    :param metadata: free-form provenance stored with the report
    :rtype: MetricsReport
    """
    records = list(records)
    if not records:
        raise DataError("cannot report on an empty prediction set")
    groups = group_records(records, group_by)
    overall = OrderedDict(
        (
            ("auc", roc_auc(records)),
            ("acc", accuracy(records, threshold)),
            ("fpr", fpr(records, threshold)),
            ("n_real", sum(1 for r in records if r.label == Label.REAL)),
            ("n_fake", sum(1 for r in records if r.label == Label.FAKE)),
        )
    )
    per_group = OrderedDict((name, _group_row(g, threshold)) for name, g in groups.items())

    fairness = OrderedDict()
    exclusions = OrderedDict()
    detail = (
        ("f_fpr", lambda: f_fpr_detail(records, threshold, group_by)),
        ("f_mag_auc", lambda: f_mag_detail(records, "auc", threshold, group_by)),
        ("f_mag_acc", lambda: f_mag_detail(records, "acc", threshold, group_by)),
        ("f_meo", lambda: f_meo_detail(records, threshold, group_by)),
    )
    for name, compute in detail:
        try:
            value, excluded = compute()
        except (FewerThanTwoGroups, NoValidGroupPair) as e:
            logger.warning("[EVAL][W] {} undefined: {}".format(name, e))
            value, excluded = None, [g for g in groups]
        fairness[name] = value
        exclusions[name] = excluded

    return MetricsReport(
        overall=overall,
        per_group=per_group,
        fairness=fairness,
        threshold=threshold,
        group_by=group_by,
        exclusions=exclusions,
        metadata=dict(metadata or {}),
    )


def _diff(a, b):
    if a is None or b is None:
        return None
    return b - a


def robustness_delta(clean, perturbed):
    """
    Perturbed minus clean for F_FPR, F_MAG (AUC gap) and overall AUC
    :rtype: OrderedDict
    """
    if clean.group_by != perturbed.group_by:
        raise MismatchedReports(
            "group_by differs: {} vs {}".format(clean.group_by, perturbed.group_by)
        )
    if clean.threshold != perturbed.threshold:
        raise MismatchedReports(
            "threshold differs: {} vs {}".format(clean.threshold, perturbed.threshold)
        )
    return OrderedDict(
        (
            ("delta_f_fpr", _diff(clean.fairness["f_fpr"], perturbed.fairness["f_fpr"])),
            ("delta_f_mag", _diff(clean.fairness["f_mag_auc"], perturbed.fairness["f_mag_auc"])),
            ("delta_auc", _diff(clean.overall["auc"], perturbed.overall["auc"])),
        )
    )
