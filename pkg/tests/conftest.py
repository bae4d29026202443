import numpy as np
import pytest

import config
from synth import SceneSpec, gen_scene


@pytest.fixture(autouse=True)
def isolated_config(tmp_path, monkeypatch):
    """Keep user config and logs out of the real home directory."""
    config_dir = tmp_path / "config"
    monkeypatch.setattr(config, "CONFIG_DIR", config_dir)
    monkeypatch.setattr(config, "CONFIG_FILE", config_dir / "config.json")
    monkeypatch.delenv("DISPREFINE_THREADS", raising=False)
    return config_dir


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def shift_scene():
    """Random-smooth texture shifted by a constant 4 px, no lighting change."""
    return gen_scene(SceneSpec(width=128, height=96, disparity=4.0, seed=7))
