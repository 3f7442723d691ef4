#!/usr/bin/env python

"""
pre_commit_hooks/pre_commit_hook.py

===============================================================================

    Copyright (C) 2024 The udp_certify authors.

    This file is part of udp_certify.

    This is free software: you can redistribute it and/or modify
    it under the terms of the GNU General Public License as published by
    the Free Software Foundation, either version 3 of the License, or
    (at your option) any later version.

    This software is distributed in the hope that it will be useful,
    but WITHOUT ANY WARRANTY; without even the implied warranty of
    MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE. See the
    GNU General Public License for more details.

    You should have received a copy of the GNU General Public License
    along with this software. If not, see <https://www.gnu.org/licenses/>.

===============================================================================

Pre-commit hook script that checks:

- formatting (black, line length 79);
- style and errors (flake8, configured in setup.cfg);
- that every published JSON schema is itself a valid draft-07 schema.

Usage:

.. code-block:: bash

    cd .git/hooks
    ln -s ../../pre_commit_hooks/pre_commit_hook.py pre-commit

Use ``git commit -n`` to skip the checks. Nothing is stashed, so uncommitted
changes are checked too.
"""

import glob
import json
import logging
import os
from subprocess import CalledProcessError, run
import sys
from typing import List

from cardinal_pythonlib.logs import main_only_quicksetup_rootlogger
from jsonschema import Draft7Validator
from jsonschema.exceptions import SchemaError

EXIT_FAILURE = 1

PRECOMMIT_DIR = os.path.dirname(os.path.realpath(__file__))
PROJECT_ROOT = os.path.abspath(os.path.join(PRECOMMIT_DIR, ".."))
CONFIG_FILE = os.path.join(PROJECT_ROOT, "setup.cfg")
PYTHON_DIRS = [
    os.path.join(PROJECT_ROOT, "udp_certify"),
    os.path.join(PROJECT_ROOT, "pre_commit_hooks"),
    os.path.join(PROJECT_ROOT, "setup.py"),
]
SCHEMA_GLOB = os.path.join(
    PROJECT_ROOT, "udp_certify", "schemas", "*.schema.json"
)

log = logging.getLogger(__name__)


def run_with_check(args: List[str]) -> None:
    run(args, check=True)


def check_formatting() -> None:
    # Black does not read setup.cfg; keep this consistent with flake8.
    run_with_check(
        ["black", "--line-length", "79", "--diff", "--check"] + PYTHON_DIRS
    )


def check_style() -> None:
    run_with_check(["flake8", f"--config={CONFIG_FILE}"] + PYTHON_DIRS)


def check_schemas() -> int:
    """
    Returns the number of schema files that fail to load or are not valid
    draft-07.
    """
    failures = 0
    filenames = sorted(glob.glob(SCHEMA_GLOB))
    if not filenames:
        log.error(f"No schemas match {SCHEMA_GLOB}")
        return 1
    for filename in filenames:
        try:
            with open(filename) as f:
                Draft7Validator.check_schema(json.load(f))
        except (json.JSONDecodeError, SchemaError) as e:
            log.error(f"{filename}: {e}")
            failures += 1
    log.info(f"Checked {len(filenames)} schemas; {failures} bad")
    return failures


def in_virtualenv() -> bool:
    return sys.base_prefix != sys.prefix


def main() -> None:
    if not in_virtualenv():
        log.error("pre_commit_hook.py must be run inside a virtualenv")
        sys.exit(EXIT_FAILURE)
    if not os.path.isfile(CONFIG_FILE):
        log.error(f"Cannot find config file {CONFIG_FILE}; aborting")
        sys.exit(EXIT_FAILURE)
    try:
        log.info("Checking formatting...")
        check_formatting()
        log.info("Checking style and errors...")
        check_style()
    except CalledProcessError as e:
        log.error(str(e))
        log.error("Pre-commit hook failed. Check errors above")
        sys.exit(EXIT_FAILURE)
    log.info("Checking JSON schemas...")
    if check_schemas():
        sys.exit(EXIT_FAILURE)
    log.info("... all good.")


if __name__ == "__main__":
    main_only_quicksetup_rootlogger()
    main()
