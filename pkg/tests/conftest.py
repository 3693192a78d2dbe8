"""Shared fixtures: one pattern and a few rendered scenes, built once."""

from __future__ import annotations

import numpy as np
import pytest

from patternflow.config import Config
from patternflow.simulator import (generate_pattern, render_sequence,
                                   scene_preset, write_dataset)


@pytest.fixture(scope="session")
def pattern():
    return generate_pattern(seed=7, dot_count=200, min_spacing=8.0)


@pytest.fixture(scope="session")
def static_bundle(pattern):
    return render_sequence(pattern, scene_preset("static"), 8, seed=11)


@pytest.fixture(scope="session")
def default_bundle(pattern):
    """16 noise-free frames of the default non-rigid scene."""
    return render_sequence(pattern, scene_preset("default"), 16, seed=11)


@pytest.fixture(scope="session")
def static_dataset(static_bundle, tmp_path_factory):
    out = tmp_path_factory.mktemp("ds_static")
    write_dataset(static_bundle, out)
    return out


@pytest.fixture(scope="session")
def default_dataset(pattern, tmp_path_factory):
    """64 noise-free frames of the default scene, written to disk."""
    bundle = render_sequence(pattern, scene_preset("default"), 64, seed=11)
    out = tmp_path_factory.mktemp("ds_default")
    write_dataset(bundle, out)
    return out


@pytest.fixture()
def config():
    return Config()


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
