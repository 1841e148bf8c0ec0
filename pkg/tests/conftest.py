import os
from dataclasses import replace
from pathlib import Path

import pytest

from clfac.config import ExperimentConfig, load_config
from clfac.suite import build_suite

REPO = Path(__file__).resolve().parent.parent


@pytest.fixture(scope="session")
def default_cfg():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def suite(default_cfg):
    """Pipeline output for the default configuration, built once."""
    return build_suite(default_cfg)


@pytest.fixture(scope="session")
def case_study_cfg():
    return load_config(str(REPO / "configs" / "case_study.json"))


@pytest.fixture(scope="session")
def contour_cfg():
    cfg = load_config(str(REPO / "configs" / "contour.json"))
    return replace(cfg, out_dir=os.path.join("out", "test_contour"))


@pytest.fixture(scope="session")
def contour_suite(contour_cfg):
    return build_suite(contour_cfg)
