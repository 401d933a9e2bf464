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

"""ANSI color formatting for output in terminal."""

import os

from colorama import Fore, Style
from colorama import init as colorama_init

__all__ = ["colored", "cprint"]

COLORS = {
    "grey": Fore.LIGHTBLACK_EX,
    "red": Fore.RED,
    "green": Fore.GREEN,
    "yellow": Fore.YELLOW,
    "blue": Fore.BLUE,
    "magenta": Fore.MAGENTA,
    "cyan": Fore.CYAN,
    "white": Fore.WHITE,
}

colorama_init()


def colors_disabled():
    return (
        os.getenv("ANSI_COLORS_DISABLED") is not None
        or os.getenv("FAIRMISLEAD_NO_COLORS") is not None
    )


def colored(text, color=None, bold=False):
    """Colorize text unless colors are disabled through the environment.

    Example:
        colored('Hello, World!', 'red')
        colored('Hello, World!', 'green', bold=True)
    """
    if colors_disabled() or (color is None and not bold):
        return text
    prefix = COLORS.get(color, "")
    if bold:
        prefix += Style.BRIGHT
    return "{}{}{}".format(prefix, text, Style.RESET_ALL)


def cprint(text, color=None, bold=False, **kwargs):
    """Print colorized text.

    It accepts arguments of print function.
    """
    print(colored(text, color, bold=bold), **kwargs)
