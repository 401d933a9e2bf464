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

import hashlib
import logging
import os

import numpy as np
import progressbar
from jinja2 import Environment, FileSystemLoader

BUF_SIZE = 65536  # lets read stuff in 64kb chunks!

TEMPLATES_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "templates")

logger = logging.getLogger("fairmislead")


def check_progressbar(iterable, enable_progressbar=True, **kwargs):
    """
    Wraps an iterable in a progress bar, or returns it as a plain list
    when progress bars are disabled
    """
    if enable_progressbar:
        return progressbar.progressbar(iterable, redirect_stdout=True, **kwargs)
    return list(iterable)


def get_sha256(filepath):
    """
    Streams a file through SHA-256
    :param filepath: path to the file
    :type filepath: str
    :return: hex digest
    :rtype: str
    """
    sha256 = hashlib.sha256()
    with open(filepath, "rb") as f:
        while True:
            data = f.read(BUF_SIZE)
            if not data:
                break
            sha256.update(data)
    return sha256.hexdigest()


def arrays_sha256(named_arrays):
    """
    SHA-256 over (name, array) pairs. Arrays are hashed as little-endian
    float64 so the digest does not depend on the working dtype.
    :param named_arrays: iterable of (name, array-like)
    :return: hex digest
    :rtype: str
    """
    sha256 = hashlib.sha256()
    for name, array in named_arrays:
        data = np.ascontiguousarray(np.asarray(array, dtype="<f8"))
        sha256.update(name.encode("utf-8"))
        sha256.update(str(data.shape).encode("ascii"))
        sha256.update(data.tobytes())
    return sha256.hexdigest()


def derive_rng(seed, *keys):
    """
    Counter-based RNG stream: the same (seed, keys) always yields the same
    generator, independent of the order streams are requested in.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=keys))


def ensure_writable_dir(path):
    """
    Creates path if needed and returns True if files can be written there
    """
    try:
        os.makedirs(path, exist_ok=True)
    except OSError:
        return False
    return os.path.isdir(path) and os.access(path, os.W_OK)


def read_parse_and_write_template(
    template_name, output_path=None, templates_dir=TEMPLATES_DIR, **kwargs
):
    """
    Read a jinja2 template, render it with kwargs and write it to
    output_path. Returns the rendered text when output_path is None.
    :param template_name: file name inside templates_dir
    :type template_name: str
    :param output_path: Path to write the rendered template
    :type output_path: str
    :param templates_dir: directory holding the templates
    :type templates_dir: str
    :return:
    :rtype: Union[str, None]
    """
    environment = Environment(
        loader=FileSystemLoader(templates_dir), autoescape=True, keep_trailing_newline=True
    )
    template = environment.get_template(template_name)
    rendered = template.render(**kwargs)
    if output_path is None:
        return rendered
    logger.info("[REPORT] Writing rendered template: {}".format(output_path))
    with open(output_path, "w", encoding="utf-8") as w:
        w.write(rendered)
    return None
