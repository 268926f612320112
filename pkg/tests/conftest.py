import numpy as np
import pytest

import linevox as lv


@pytest.fixture(scope="session")
def helix_scene():
    """Small helix pipeline state shared by render-level tests."""
    cfg = lv.PipelineConfig(input="gen:helix?turns=2&verts=60", res=32,
                            width=64, height=64)
    pipe = lv.ScenePipeline(cfg)
    img = pipe.render_frame()
    scene, cam = pipe._last
    return {"pipe": pipe, "img": img, "scene": scene, "cam": cam, "cfg": cfg}


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


def make_scene(input_spec: str, res: int = 32, **cfg_kw):
    cfg = lv.PipelineConfig(input=input_spec, res=res, **cfg_kw)
    pipe = lv.ScenePipeline(cfg)
    return pipe
