import math

import numpy as np
import pandas as pd
import pytest
import shapely
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import LineString, box

from urbanmorph.ingest import Zone
from urbanmorph.morphometrics.compute import ElementMetricTable, UrbanFabric, compute_all
from urbanmorph.morphometrics.registry import CODES, ELEMENTS
from urbanmorph.synthcity import grid_city
from urbanmorph.zonal import ZoneAssignment, aggregate_mean, assign_to_zones, distance_to_centre, locate, zone_matrix

TWO = [Zone("B", box(10, 0, 20, 10)), Zone("A", box(0, 0, 10, 10))]


def table(element, values, codes=("sdcAre",)):
    tables = {e: pd.DataFrame(index=pd.Index([], dtype=str)) for e in ELEMENTS}
    tables[element] = pd.DataFrame({c: values for c in codes},
                                   index=pd.Index([str(i) for i in range(len(values))]), dtype=float)
    return ElementMetricTable(tables)


def assignment(element, labels):
    zones = {e: [] for e in ELEMENTS}
    zones[element] = list(labels)
    return ZoneAssignment(zones)


def test_border_tie_goes_to_lower_id():
    assert locate(shapely.points([(10, 5), (5, 5), (15, 5)]), TWO) == ["A", "A", "B"]


def test_segment_by_midpoint():
    seg = LineString([(2, 5), (16, 5)])  # crosses both, midpoint at x=9
    pts = {"segment": shapely.line_interpolate_point(np.array([seg]), 0.5, normalized=True)}
    assert assign_to_zones(pts, TWO).zones["segment"] == ["A"]


def test_outside_unassigned():
    out = assign_to_zones({"node": shapely.points([(50, 50), (1, 1)])}, TWO)
    assert out.zones["node"] == [None, "A"]
    assert out.unassigned["node"] == 1


def test_mean_volumes():
    means, counts = aggregate_mean(table("building", [600.0, 400.0], ("sdbVol",)),
                                   assignment("building", ["A", "A"]), ["A", "B"])
    assert means.loc["A", "sdbVol"] == 500.0
    assert counts.loc["A", "sdbVol"] == 2
    assert math.isnan(means.loc["B", "sdbVol"]) and counts.loc["B", "sdbVol"] == 0


def test_missing_values_excluded():
    means, counts = aggregate_mean(table("segment", [0.5, np.nan, 1.5], ("sdsSPR",)),
                                   assignment("segment", ["A", "A", "A"]), ["A"])
    assert means.loc["A", "sdsSPR"] == 1.0
    assert counts.loc["A", "sdsSPR"] == 2


def test_identical_buildings_constant_means():
    means, _ = aggregate_mean(table("building", [7.25] * 6, ("sdbHei",)),
                              assignment("building", ["A", "B"] * 3), ["A", "B"])
    assert means["sdbHei"].tolist() == [7.25, 7.25]


@pytest.mark.parametrize("offset, km", [((0, 0), 0.0), ((3000, 0), 3.0), ((3000, 4000), 5.0)])
def test_distance_to_centre(offset, km):
    zone = Zone("z", box(-100 + offset[0], -100 + offset[1], 100 + offset[0], 100 + offset[1]))
    assert distance_to_centre(zone, (0.0, 0.0)) == km


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e6, 1e6), st.sampled_from("AB")), min_size=2, max_size=40))
def test_recombination(items):
    values = [v for v, _ in items]
    labels = [z for _, z in items]
    means, counts = aggregate_mean(table("cell", values), assignment("cell", labels), ["A", "B"])
    merged, _ = aggregate_mean(table("cell", values), assignment("cell", ["M"] * len(values)), ["M"])
    n = counts["sdcAre"].to_numpy()
    pooled = math.fsum(means["sdcAre"].fillna(0).to_numpy() * n) / n.sum()
    assert merged.loc["M", "sdcAre"] == pytest.approx(pooled, rel=1e-12, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e6, 1e6), st.sampled_from("AB")), min_size=1, max_size=30),
       st.randoms(use_true_random=False))
def test_element_order_invariance(items, rnd):
    shuffled = list(items)
    rnd.shuffle(shuffled)
    def means(pairs):
        values, labels = zip(*pairs)
        return aggregate_mean(table("node", list(values), ("lcnClo",)), assignment("node", labels), "AB")[0]

    pd.testing.assert_frame_equal(means(items), means(shuffled))


def test_zone_matrix_on_grid():
    fx = grid_city(rows=3, cols=3, per_side=2)
    fabric = UrbanFabric.build(fx.buildings, fx.network)
    metrics = compute_all(fabric)
    attrs = pd.DataFrame({"ctrl": [1.0, 2.0, 3.0]}, index=pd.Index([z.id for z in fx.zones[:3]], name="zone_id"))
    mat, assign = zone_matrix(fabric, metrics, fx.zones, attrs, centre=(150.0, 150.0))
    assert list(mat.index) == sorted(attrs.index)
    assert list(mat.columns[:69]) == list(CODES)
    assert mat["ctrl"].tolist() == [1.0, 2.0, 3.0]
    assert (mat["dist_centre_km"] > 0).all()
    full, _ = zone_matrix(fabric, metrics, fx.zones)
    assert full["n_building"].sum() == len(fx.buildings) - assign.unassigned["building"]
    assert full["n_node"].sum() + assign.unassigned["node"] == fx.network.n_nodes
