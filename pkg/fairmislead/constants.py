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

# flake8: noqa

MANIFEST_HEADER = ("id", "path", "label", "gender", "race", "method", "split")

PREDICTIONS_HEADER = ("sample_id", "score", "label", "gender", "race", "method")

TRAINING_LOG_HEADER = ("step", "epoch", "l_cls", "l_con", "l_final", "total")

REPORT_CSV_HEADER = (
    "group",
    "auc",
    "acc",
    "fpr",
    "n_real",
    "n_fake",
)

COMPARISON_CSV_HEADER = (
    "report",
    "dataset",
    "split",
    "perturbation",
    "stage",
    "group_by",
    "threshold",
    "auc",
    "acc",
    "fpr",
    "f_fpr",
    "f_mag_auc",
    "f_mag_acc",
    "f_meo",
)

DELTAS_CSV_HEADER = ("report", "perturbation", "delta_f_fpr", "delta_f_mag", "delta_auc")

# SRM residual kernels, 5x5, divided by their standard normalisers.
# The first-order line kernel (1/2), the second-order "KB" square kernel
# (1/4) and the third-order edge kernel (1/12).
SRM_KERNELS = (
    (
        (
            (0.0, 0.0, 0.0, 0.0, 0.0),
            (0.0, 0.0, 0.0, 0.0, 0.0),
            (0.0, 1.0, -2.0, 1.0, 0.0),
            (0.0, 0.0, 0.0, 0.0, 0.0),
            (0.0, 0.0, 0.0, 0.0, 0.0),
        ),
        2.0,
    ),
    (
        (
            (0.0, 0.0, 0.0, 0.0, 0.0),
            (0.0, -1.0, 2.0, -1.0, 0.0),
            (0.0, 2.0, -4.0, 2.0, 0.0),
            (0.0, -1.0, 2.0, -1.0, 0.0),
            (0.0, 0.0, 0.0, 0.0, 0.0),
        ),
        4.0,
    ),
    (
        (
            (-1.0, 2.0, -2.0, 2.0, -1.0),
            (2.0, -6.0, 8.0, -6.0, 2.0),
            (-2.0, 8.0, -12.0, 8.0, -2.0),
            (2.0, -6.0, 8.0, -6.0, 2.0),
            (-1.0, 2.0, -2.0, 2.0, -1.0),
        ),
        12.0,
    ),
)

SRM_DEFAULT_CHANNELS = 30
SRM_DEFAULT_LAMBDA = 1e-4
# standard SRM truncation T=2, expressed in [0, 1] pixel units
SRM_DEFAULT_THRESHOLD = 2.0 / 255.0

DCT_BLOCK = 8
# zeroed coefficients: u + v <= DCT_CUTOFF (DC plus the first two anti-diagonals)
DCT_CUTOFF = 2

# planted generator artifact: additive sinusoid grid of this period (pixels)
FINGERPRINT_PERIOD = 4
FINGERPRINT_CROP = 0.5

# Disturbance intensity ladders, levels 1..5 (level 0 is the identity).
# Five-level ladders in the style of common face-forgery robustness benchmarks,
# rescaled to small [0, 1] images. Bump the version when a value changes.
DISTURBANCE_LADDER_VERSION = "1"
DISTURBANCE_KINDS = ("GN", "GB", "BWN", "PX", "CC", "CS", "IC", "AT")
DISTURBANCE_NAMES = {
    "GN": "Gaussian Noise",
    "GB": "Gaussian Blur",
    "BWN": "Block-Wise Noise",
    "PX": "Pixelation",
    "CC": "Color Contrast",
    "CS": "Color Saturation",
    "IC": "Image Compression",
    "AT": "Affine Transformation",
}
DISTURBANCE_LADDER = {
    # noise standard deviation
    "GN": (0.02, 0.035, 0.05, 0.07, 0.1),
    # blur standard deviation, kernel radius = ceil(2 * sigma)
    "GB": (0.5, 1.0, 1.5, 2.0, 3.0),
    # number of noise blocks, block side = image side // 8
    "BWN": (2, 4, 6, 8, 10),
    # pixelation block side
    "PX": (2, 4, 6, 8, 12),
    # contrast scale
    "CC": (0.85, 0.725, 0.6, 0.475, 0.35),
    # saturation scale
    "CS": (0.8, 0.6, 0.4, 0.2, 0.0),
    # JPEG quality
    "IC": (80, 60, 40, 25, 10),
    # (max rotation in degrees, max translation as a fraction of the side)
    "AT": ((2.0, 0.02), (4.0, 0.04), (6.0, 0.06), (8.0, 0.08), (10.0, 0.10)),
}
MAX_INTENSITY = 5

# FF++ train split subgroup counts
FFPP_TRAIN_COUNTS = {
    "M-A": 2475,
    "M-B": 1468,
    "M-W": 25443,
    "M-O": 4163,
    "F-A": 8013,
    "F-B": 1111,
    "F-W": 31281,
    "F-O": 2185,
}

DEFAULT_THRESHOLD = 0.5
SCORE_EPSILON = 1e-7

SUMMARY_TEMPLATE = "summary.html"

SWEEP_CSV_HEADER = ("variant", "n_seeds", "auc", "f_fpr", "f_mag_auc", "f_mag_acc", "f_meo")
