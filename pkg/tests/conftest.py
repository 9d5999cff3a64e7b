import os
from pathlib import Path

import numpy as np
import pytest

from sqgci import cli, io

REFERENCE_CONFIG = """\
# desk-scale reference
lambda0 = 12
b = 1.2
beta = 0.3
alpha = 0.6
gamma = 1.0
nu = 0.0
c0 = 2.0
stages = 2
"""

SMALL_CONFIG = """\
lambda0 = 8
b = 1.2
beta = 0.3
alpha = 0.6
gamma = 1.0
nu = 0.0
c0 = 2.0
stages = 1
"""

_ACCEPTANCE = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def accept():
    """Record one pass/fail line per acceptance criterion."""

    def record(criterion, ok, detail):
        _ACCEPTANCE[int(criterion)] = (bool(ok), detail)
        print(f"\n[acceptance {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


def write_config(path: Path, text: str) -> Path:
    path.write_text(text)
    return path


@pytest.fixture(scope="session")
def reference_dir(tmp_path_factory):
    """Reference run through the CLI; returns the output directory and exit code."""
    root = tmp_path_factory.mktemp("reference")
    cfg = write_config(root / "ref.cfg", REFERENCE_CONFIG)
    code = cli.main(["run", "--config", str(cfg), "--out", str(root / "run")])
    return root, code


@pytest.fixture(scope="session")
def reference_states(reference_dir):
    root, code = reference_dir
    loaded = [io.load_state(d) for d in io.list_states(root / "run")]
    return code, [s for s, _ in loaded], [r for _, r in loaded]


@pytest.fixture(scope="session")
def small_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("small")
    cfg = write_config(root / "small.cfg", SMALL_CONFIG)
    code = cli.main(["run", "--config", str(cfg), "--out", str(root / "run")])
    return root, cfg, code
