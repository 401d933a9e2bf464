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
import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Mapping, Tuple

import numpy as np

from fairmislead.data.manifest import (
    DatasetManifest,
    DemographicKey,
    Label,
    Sample,
    Split,
)
from fairmislead.errors import DataError

logger = logging.getLogger("fairmislead")


class ZeroProportion(DataError):
    """
    Raised when a represented subgroup has proportion 0, for which the
    inverse-frequency bias is undefined
    """

    def __init__(self, key):
        self.key = key
        super().__init__("subgroup {} has proportion 0".format(key))


class InsufficientSubgroups(DataError):
    """
    Raised when fewer than two subgroups hold real samples
    """

    pass


class NoEligibleSubgroup(DataError):
    """
    Raised when the library has no nonempty subgroup other than the
    query's own
    """

    pass


class UnrepresentedSubgroup(DataError):
    """
    Raised when an extra identity sample belongs to a subgroup with no
    real samples in the split, which leaves its selection bias undefined
    """

    def __init__(self, key, split):
        self.key = key
        super().__init__(
            "extra sample of subgroup {} has no real counterpart in the {} split".format(
                key, split.value
            )
        )


def compute_selection_bias(proportions):
    """
    Inverse-frequency selection bias over subgroups:
    bias(g) = (1 / D_g) / sum_i (1 / D_i).
    Scale-invariant in the proportions, so raw counts work as well.
    :param proportions: DemographicKey -> proportion (or count)
    :type proportions: Mapping
    :return: DemographicKey -> selection probability, summing to 1
    :rtype: OrderedDict
    """
    for key, value in proportions.items():
        if not value > 0:
            raise ZeroProportion(key)
    keys = list(proportions.keys())
    inverse = [1.0 / float(proportions[k]) for k in keys]
    total = math.fsum(inverse)
    return OrderedDict((k, inv / total) for k, inv in zip(keys, inverse))


@dataclass(frozen=True)
class RedundantLibrary:
    """
    Real samples of a split bucketed by subgroup, with the selection
    bias of each nonempty bucket
    """

    samples: Mapping[DemographicKey, Tuple[Sample, ...]]
    bias: Mapping[DemographicKey, float]

    def nonempty(self):
        return [k for k in DemographicKey.all() if self.samples.get(k)]

    def __len__(self):
        return sum(len(v) for v in self.samples.values())

    def __repr__(self):
        return "RedundantLibrary({})".format(
            ", ".join(
                "{}: {} @ {:.4f}".format(k, len(self.samples[k]), self.bias[k])
                for k in self.nonempty()
            )
        )


def build_library(source, split=Split.TRAIN, extra=()):
    """
    Builds the shared redundant library from the real samples of a split.
    The bias is computed from the split's real-sample proportions.
    :param source: a DatasetManifest (its reals are loaded from disk) or
    an iterable of already loaded Sample objects
    :param split: split whose reals populate the library
    :param extra: additional real identity samples, bucketed as well
    :rtype: RedundantLibrary
    """
    split = Split(split) if not isinstance(split, Split) else split
    if isinstance(source, DatasetManifest):
        samples = [
            source.load_sample(e)
            for e in source.in_split(split)
            if e.label == Label.REAL
        ]
    else:
        samples = source
    buckets = OrderedDict((k, []) for k in DemographicKey.all())
    for sample in samples:
        if sample.split == split and sample.label == Label.REAL:
            buckets[sample.subgroup].append(sample)
    counts = OrderedDict((k, len(v)) for k, v in buckets.items() if v)
    if len(counts) < 2:
        raise InsufficientSubgroups(
            "redundant library needs real samples in at least two subgroups, "
            "{} split has {}".format(split.value, len(counts))
        )
    total = sum(counts.values())
    bias = compute_selection_bias(OrderedDict((k, n / total) for k, n in counts.items()))

    for sample in extra:
        if sample.label != Label.REAL:
            continue
        if sample.subgroup not in bias:
            raise UnrepresentedSubgroup(sample.subgroup, split)
        buckets[sample.subgroup].append(sample)

    library = RedundantLibrary(
        samples=OrderedDict((k, tuple(v)) for k, v in buckets.items() if v),
        bias=OrderedDict((k, bias[k]) for k, v in buckets.items() if v),
    )
    logger.info("[LIBRARY] Built {}".format(library))
    return library


def eligible_weights(query_subgroup, lib, use_bias=True):
    """
    Subgroups a query can be paired with and their renormalized weights.
    Without bias, eligible subgroups are equally likely.
    """
    keys = [k for k in lib.nonempty() if k != query_subgroup]
    if use_bias:
        weights = np.array([lib.bias[k] for k in keys], dtype=np.float64)
        if weights.sum() <= 0:
            weights = np.ones(len(keys))
    else:
        weights = np.ones(len(keys))
    if not keys:
        return keys, weights
    return keys, weights / weights.sum()


def select_redundant(query, lib, rng, use_bias=True):
    """
    Draws a redundant partner from a subgroup other than the query's.
    The subgroup is drawn with probability proportional to its bias among
    the eligible subgroups, the sample uniformly within the subgroup.
    :param query: the sample to pair
    :type query: Sample
    :param lib: redundant library
    :type lib: RedundantLibrary
    :param rng: numpy Generator
    :param use_bias: False draws eligible subgroups uniformly
    :rtype: Sample
    """
    keys, weights = eligible_weights(query.subgroup, lib, use_bias=use_bias)
    if not keys:
        raise NoEligibleSubgroup(
            "no subgroup other than {} holds redundant samples".format(query.subgroup)
        )
    key = keys[rng.choice(len(keys), p=weights)]
    bucket = lib.samples[key]
    return bucket[int(rng.integers(len(bucket)))]
