"""conftest.py.

`pytest` configuration file. Used to flag set-up checks and slow end to end
runs, which are skipped unless asked for.
Reworked example from pytest docs:
https://docs.pytest.org/en/latest/example/simple.html.
"""

import pytest

# marker name -> command line flag enabling it
OPTIONAL_MARKS = {
    "setup": "--runsetup",
    "runexpensive": "--runexpensive",
}


def pytest_addoption(parser):
    """Adapt pytest cli args, and give more info when -h flag is used."""
    parser.addoption(
        "--runsetup",
        action="store_true",
        default=False,
        help="run set-up tests",
    )
    parser.addoption(
        "--runexpensive",
        action="store_true",
        default=False,
        help="run expensive end to end tests",
    )


def pytest_configure(config):
    """Add ini value line."""
    config.addinivalue_line("markers", "setup: mark test to run during setup")
    config.addinivalue_line(
        "markers",
        "runexpensive: mark test as a slow run of the shipped experiment",
    )


def pytest_collection_modifyitems(config, items):
    """Skip marked tests unless their flag is given."""
    for mark, flag in OPTIONAL_MARKS.items():
        if config.getoption(flag):
            continue
        skip = pytest.mark.skip(reason=f"need {flag} option to run")
        for item in items:
            if mark in item.keywords:
                item.add_marker(skip)
