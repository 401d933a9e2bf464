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


class FairMisleadError(Exception):
    """
    Base class of every error raised by fairmislead.
    The CLI maps each family onto its own exit code.
    """

    exit_code = 1


class ConfigError(FairMisleadError):
    """
    Raised when a configuration value, a flag or a constructed
    object's parameters are invalid
    """

    exit_code = 2


class DataError(FairMisleadError):
    """
    Raised when input data (manifests, images, records, reports)
    does not satisfy the contract of the operation
    """

    exit_code = 3


class NumericalError(FairMisleadError):
    """
    Raised when a computation produces non-finite values or
    breaks a numerical invariant
    """

    exit_code = 4


class LineError(DataError):
    """
    A data error attached to a (1-based) line of a text file.
    The header of a CSV file is line 1.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = "line {}: {}".format(line, message)
        super().__init__(message)
