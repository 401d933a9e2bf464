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
import logging
import math
import os
from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Optional, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError

from fairmislead.constants import MANIFEST_HEADER
from fairmislead.errors import DataError, LineError

logger = logging.getLogger("fairmislead")


class MissingColumn(DataError):
    """
    Raised when the manifest header lacks one of the required columns
    """

    pass


class BadEnumValue(LineError):
    """
    Raised when a manifest cell is outside the domain of its column
    """

    pass


class DuplicateId(LineError):
    """
    Raised when two manifest rows share the same id
    """

    pass


class MissingImageFile(DataError):
    """
    Raised when a manifest row references an image that does not exist
    """

    def __init__(self, path):
        self.path = path
        super().__init__("image file not found: {}".format(path))


class MissingManifest(DataError):
    """
    Raised when the manifest file itself does not exist
    """

    pass


class BadImage(DataError):
    """
    Raised when an image does not decode, has the wrong shape or has
    pixel values outside [0, 1]
    """

    pass


class BadScore(DataError):
    """
    Raised when a prediction score is not a finite number in [0, 1]
    """

    pass


class Gender(Enum):
    M = "M"
    F = "F"


class Race(Enum):
    A = "A"
    B = "B"
    W = "W"
    O = "O"  # noqa: E741


class Label(IntEnum):
    REAL = 0
    FAKE = 1


class Method(Enum):
    DF = "DF"
    F2F = "F2F"
    FS = "FS"
    NT = "NT"
    FST = "FST"
    SYNTH = "SYNTH"


class Split(Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


@dataclass(frozen=True)
class DemographicKey:
    """
    One of the 8 gender x race intersections. Its string form is
    "<gender>-<race>", e.g. "M-W".
    """

    gender: Gender
    race: Race

    def __str__(self):
        return "{}-{}".format(self.gender.value, self.race.value)

    def __repr__(self):
        return "DemographicKey({})".format(self)

    @classmethod
    def parse(cls, text, line=None):
        """
        >>> DemographicKey.parse("F-A")
        DemographicKey(F-A)
        """
        try:
            gender, race = str(text).split("-")
        except ValueError:
            raise BadEnumValue(
                "subgroup {!r} is not of the form <gender>-<race>".format(text), line
            )
        return cls.from_parts(gender, race, line=line)

    @classmethod
    def from_parts(cls, gender, race, line=None):
        try:
            _gender = Gender(gender)
        except ValueError:
            raise BadEnumValue("gender {!r} is not one of M, F".format(gender), line)
        try:
            _race = Race(race)
        except ValueError:
            raise BadEnumValue("race {!r} is not one of A, B, W, O".format(race), line)
        return cls(_gender, _race)

    @classmethod
    def all(cls):
        """
        All 8 keys, in the order M-A, M-B, M-W, M-O, F-A, F-B, F-W, F-O
        """
        return ALL_KEYS

    @property
    def index(self):
        return ALL_KEYS.index(self)


ALL_KEYS = tuple(DemographicKey(g, r) for g in Gender for r in Race)


def _parse_enum(enum_cls, value, column, line):
    try:
        return enum_cls(value)
    except ValueError:
        choices = ", ".join(str(x.value) for x in enum_cls)
        raise BadEnumValue(
            "{} {!r} is not one of {}".format(column, value, choices), line
        )


def parse_label(value, line=None):
    if value not in ("0", "1", 0, 1):
        raise BadEnumValue("label {!r} is not one of 0, 1".format(value), line)
    return Label(int(value))


def parse_method(value, label, line=None):
    """
    Empty method means absent. A method is required for fakes and
    forbidden for reals.
    """
    method = _parse_enum(Method, value, "method", line) if value else None
    if label == Label.FAKE and method is None:
        raise BadEnumValue("fake samples need a method", line)
    if label == Label.REAL and method is not None:
        raise BadEnumValue("real samples cannot carry a method", line)
    return method


def load_image(path, input_size=None, dtype=np.float32):
    """
    Decodes an 8-bit RGB PNG to an H x W x 3 array in [0, 1]
    :param path: path to the image
    :param input_size: expected side length, checked when given
    :param dtype: numpy dtype of the returned array
    :return: image array
    :rtype: np.ndarray
    """
    if not os.path.exists(path):
        raise MissingImageFile(path)
    try:
        with Image.open(path) as img:
            array = np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as e:
        raise BadImage("could not decode {}: {}".format(path, e))
    if input_size is not None and array.shape[:2] != (input_size, input_size):
        raise BadImage(
            "{} has size {}x{}, expected {}x{}".format(
                path, array.shape[0], array.shape[1], input_size, input_size
            )
        )
    return array.astype(dtype) / dtype(255.0)


def save_image(image, path):
    """
    Quantizes an image in [0, 1] to 8-bit RGB and writes it as PNG
    """
    quantized = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(quantized, mode="RGB").save(path, format="PNG")


@dataclass(frozen=True)
class Sample:
    """
    A face image with its authenticity label and demographic tags
    """

    id: str
    image: np.ndarray
    label: Label
    subgroup: DemographicKey
    method: Optional[Method]
    split: Split

    def __post_init__(self):
        image = self.image
        if image.ndim != 3 or image.shape[2] != 3:
            raise BadImage(
                "sample {} has image shape {}, expected HxWx3".format(
                    self.id, image.shape
                )
            )
        if not np.all(np.isfinite(image)) or image.min() < 0 or image.max() > 1:
            raise BadImage("sample {} has pixel values outside [0, 1]".format(self.id))
        if (self.method is not None) != (self.label == Label.FAKE):
            raise BadEnumValue(
                "sample {}: method must be present iff label is fake".format(self.id)
            )

    def __repr__(self):
        return "Sample({}, {}, {}, {})".format(
            self.id, self.label.name.lower(), self.subgroup, self.split.value
        )


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: str
    label: Label
    subgroup: DemographicKey
    method: Optional[Method]
    split: Split

    def as_row(self):
        return (
            self.id,
            self.path,
            str(int(self.label)),
            self.subgroup.gender.value,
            self.subgroup.race.value,
            self.method.value if self.method is not None else "",
            self.split.value,
        )


@dataclass(frozen=True)
class DatasetManifest:
    """
    Entries of a dataset manifest. Entry paths are relative to root,
    the directory holding the manifest file.
    """

    entries: Tuple[ManifestEntry, ...]
    root: str

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def name(self):
        return os.path.basename(os.path.normpath(self.root)) or self.root

    def resolve(self, entry):
        return os.path.join(self.root, entry.path)

    def in_split(self, split):
        split = Split(split) if not isinstance(split, Split) else split
        return tuple(e for e in self.entries if e.split == split)

    def validate_files(self):
        """
        Checks that every referenced image exists
        """
        for entry in self.entries:
            path = self.resolve(entry)
            if not os.path.isfile(path):
                raise MissingImageFile(path)

    def load_sample(self, entry, input_size=None, dtype=np.float32):
        return Sample(
            id=entry.id,
            image=load_image(self.resolve(entry), input_size=input_size, dtype=dtype),
            label=entry.label,
            subgroup=entry.subgroup,
            method=entry.method,
            split=entry.split,
        )


def parse_manifest(path, check_files=True):
    """
    Parses a manifest CSV with header id,path,label,gender,race,method,split
    :param path: path to the manifest file
    :type path: str
    :param check_files: verify that each referenced image exists
    :type check_files: bool
    :return: the parsed manifest
    :rtype: DatasetManifest
    """
    if not os.path.isfile(path):
        raise MissingManifest("manifest not found: {}".format(path))
    entries = list()
    seen = dict()
    with open(path, newline="", encoding="utf-8") as fp:
        reader = csv.DictReader(fp)
        header = reader.fieldnames or []
        missing = [c for c in MANIFEST_HEADER if c not in header]
        if missing:
            raise MissingColumn(
                "{} is missing column(s): {}".format(path, ", ".join(missing))
            )
        for row in reader:
            line = reader.line_num
            sample_id = row["id"]
            if not sample_id:
                raise BadEnumValue("empty id", line)
            if sample_id in seen:
                raise DuplicateId(
                    "id {!r} already used on line {}".format(sample_id, seen[sample_id]),
                    line,
                )
            seen[sample_id] = line
            label = parse_label(row["label"], line)
            entries.append(
                ManifestEntry(
                    id=sample_id,
                    path=row["path"],
                    label=label,
                    subgroup=DemographicKey.from_parts(row["gender"], row["race"], line),
                    method=parse_method(row["method"], label, line),
                    split=_parse_enum(Split, row["split"], "split", line),
                )
            )
    manifest = DatasetManifest(
        entries=tuple(entries), root=os.path.dirname(os.path.abspath(path))
    )
    if check_files:
        manifest.validate_files()
    logger.debug("[DATA] Parsed {} entries from {}".format(len(manifest), path))
    return manifest


def write_manifest(manifest, path):
    """
    Writes the manifest canonically ordered by id
    """
    with open(path, "w", newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for entry in sorted(manifest.entries, key=lambda e: e.id):
            writer.writerow(entry.as_row())


def subgroup_counts(manifest, split):
    """
    Number of entries of each subgroup in a split; absent subgroups map to 0
    :rtype: OrderedDict
    """
    counts = OrderedDict((key, 0) for key in DemographicKey.all())
    for entry in manifest.in_split(split):
        counts[entry.subgroup] += 1
    return counts


def subgroup_proportions(entries):
    """
    Proportion of each nonempty subgroup among entries
    """
    counts = OrderedDict()
    for key in DemographicKey.all():
        n = sum(1 for e in entries if e.subgroup == key)
        if n:
            counts[key] = n
    total = sum(counts.values())
    return OrderedDict((k, v / total) for k, v in counts.items()) if total else counts


@dataclass(frozen=True)
class PredictionRecord:
    """
    Score of one sample, the unit of every metric computation
    """

    sample_id: str
    score: float
    label: Label
    subgroup: DemographicKey
    method: Optional[Method] = None

    def __post_init__(self):
        if not (isinstance(self.score, (float, int)) and math.isfinite(self.score)):
            raise BadScore(
                "sample {}: score {!r} is not finite".format(self.sample_id, self.score)
            )
        if not 0.0 <= self.score <= 1.0:
            raise BadScore(
                "sample {}: score {} outside [0, 1]".format(self.sample_id, self.score)
            )
