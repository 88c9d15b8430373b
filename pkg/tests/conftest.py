import numpy as np
import pytest

from terraloc.geodata import EdgeMap, HeightGrid


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_grid(cells, nodata=None, origin=(0.0, 0.0), res=1.0):
    cells = np.asarray(cells, dtype=np.float64)
    return HeightGrid(origin, res, cells, nodata)


def make_edges(cells, nodata=None, origin=(0.0, 0.0), res=1.0):
    cells = np.asarray(cells, dtype=np.uint8)
    if nodata is None:
        nodata = np.zeros(cells.shape, dtype=bool)
    return EdgeMap(origin, res, cells, np.asarray(nodata, dtype=bool))


def random_edges(rng, shape, edge_p=0.2, nodata_p=0.0, origin=(0.0, 0.0), res=1.0):
    cells = (rng.random(shape) < edge_p).astype(np.uint8)
    nodata = rng.random(shape) < nodata_p
    cells[nodata] = 0
    return make_edges(cells, nodata, origin, res)
