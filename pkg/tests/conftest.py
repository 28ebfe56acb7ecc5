import json

import numpy as np
import pytest
from shapely.geometry import LineString, Polygon, box, mapping

from urbanmorph.ingest import BuildingFootprint, network_from_lines


def square(x, y, side=10.0):
    return box(x, y, x + side, y + side)


def footprints(polys, height=6.0, prefix="b"):
    return [BuildingFootprint(f"{prefix}{i}", p, height) for i, p in enumerate(polys)]


def network(*segments, snap_tol=0.1):
    return network_from_lines([(f"s{i}", LineString(c)) for i, c in enumerate(segments)], snap_tol=snap_tol)


def write_features(path, geoms, props=None):
    props = props or [{} for _ in geoms]
    fc = {"type": "FeatureCollection",
          "features": [{"type": "Feature", "properties": p, "geometry": mapping(g) if g is not None else None}
                       for g, p in zip(geoms, props)]}
    path.write_text(json.dumps(fc))
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
