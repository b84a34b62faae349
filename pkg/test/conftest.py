from __future__ import annotations

import pytest

from pose_boost.config import ExperimentConfig

TINY_GRAPH = """\
name tiny5
root 0
joint 0 base
joint 1 a1
joint 2 a2
joint 3 b1
joint 4 b2
edge 0 1 physical
edge 1 2 physical
edge 0 3 physical
edge 3 4 physical
edge 1 3 symmetrical
edge 2 4 symmetrical
"""


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance experiments")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


# --- helpers ---------------------------------------------------------------


@pytest.fixture
def tiny_graph_file(tmp_path):
    path = tmp_path / "tiny5.graph"
    path.write_text(TINY_GRAPH, encoding="utf-8")
    return path


@pytest.fixture
def tiny_config(tmp_path, tiny_graph_file):
    """A 5-joint network on 16x16 images, small enough for per-test training runs."""

    def make(**sections) -> ExperimentConfig:
        raw = {
            "network": {"preset": "tiny", "stacks": 1, "boosting": "fb_plus"},
            "graph": {"name": str(tiny_graph_file), "variant": "bidirectional"},
            "training": {"epochs": 1, "batch_size": 2, "learning_rate": 0.05, "precision": "float64"},
            "data": {
                "train_dir": str(tmp_path / "data" / "train"),
                "test_dir": str(tmp_path / "data" / "test"),
                "num_train": 4,
                "num_test": 3,
                "background": "flat",
            },
            "cache": {"directory": str(tmp_path / "cache")},
        }
        for section, values in sections.items():
            raw.setdefault(section, {}).update(values)
        return ExperimentConfig.from_dict(raw)

    return make
