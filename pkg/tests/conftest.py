import numpy as np
import pytest

from secureanon import synthdata as sd
from secureanon.config import Config
from secureanon.pipeline import PipelineModel


def small_config(precision: str = "float64", **train) -> Config:
    raw = {
        "dims": {"d_z": 8, "d_k": 8, "d_w": 8, "m": 2, "d_id": 4, "d_attr": 4, "height": 12, "width": 12},
        "nets": {"id_hidden": 16, "attr_hidden": 16, "map_hidden": 16, "gen_hidden": 16, "basis": 4,
                 "proxy_dim": 4, "percep_hidden": 8, "percep_dim": 6},
        "flow": {"n_blocks": 2},
        "train": {"iters0": 6, "iters1": 6, "iters2": 6, "batch0": 4, "log_every": 2, **train},
        "precision": precision,
    }
    return Config.from_dict(raw)


@pytest.fixture
def cfg():
    return small_config()


@pytest.fixture
def model(cfg):
    return PipelineModel.build(cfg)


@pytest.fixture
def small_data(cfg):
    d = cfg.dims
    return sd.gen_dataset(20, 3, d.d_id, d.d_attr, seed=3, height=d.height, width=d.width)


@pytest.fixture
def images(cfg):
    d = cfg.dims
    return np.random.default_rng(0).uniform(0.05, 0.95, (3, d.height, d.width))
