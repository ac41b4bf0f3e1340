import os
import pathlib

import numpy as np
import pytest

DATA_DIR = pathlib.Path(__file__).parent / "data"


@pytest.fixture
def data_dir():
    return DATA_DIR


@pytest.fixture
def rng():
    from gatedrnn.core import Rng
    return Rng(1234)


def rand_params(kind, h, d, rng, scale=0.8, context=None):
    """CellParams with every entry uniform on [-scale, scale]."""
    from gatedrnn.cells import CellKind, init_params
    kind = CellKind.parse(kind)
    p = context if context is not None else (max(1, h // 2) if kind is CellKind.SCRN else 0)
    params = init_params(kind, h, d, p, rng)
    for name in params.names():
        params.arrays[name][...] = rng.uniform(-scale, scale, params.arrays[name].shape)
    return params


os.environ.setdefault("PYTHONHASHSEED", "0")
np.seterr(all="raise", under="ignore")
