"""Shared fixtures plus the acceptance summary hook."""

import numpy as np
import pytest

# Filled by test_acceptance.py; echoed after the run so every criterion
# shows one visible pass/fail line regardless of capture settings.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """3 classes x 6 images at side 48: 5 train + 1 test per class."""
    from proxkit.imageio import generate_synthetic

    root = tmp_path_factory.mktemp("smallset")
    return generate_synthetic(root, classes=3, per_class=6, side=48, seed=3)


@pytest.fixture(scope="session")
def cli_artifacts(small_dataset, tmp_path_factory):
    """Artifact directory from one CLI training run over the small dataset."""
    from proxkit.cli import main

    out = tmp_path_factory.mktemp("artifacts")
    rc = main(
        [
            "train",
            "--manifest", str(small_dataset.root / "manifest.tsv"),
            "--out", str(out),
            "--vocab", "16",
            "--rank-r", "8",
        ]
    )
    assert rc == 0
    return out
