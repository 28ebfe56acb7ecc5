import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from urbanmorph.errors import ValidationError
from urbanmorph.ingest import load_buildings, load_streets, load_zones
from urbanmorph.morphometrics.compute import UrbanFabric, compute_all
from urbanmorph.morphometrics.network import NetworkGraph, degree_proportions, meshedness
from urbanmorph.spatial.weights import knn_weights
from urbanmorph.synthcity import (
    CONTROL_NAMES,
    composite_city,
    culdesac_suburb,
    dgp_error,
    dgp_lag,
    grid_city,
    neumann_solve,
    plant_outcome,
    random_points,
    rng_for,
)


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 6), st.integers(3, 6), st.integers(2, 5), st.integers(0, 4))
def test_grid_counts(rows, cols, per_side, stubs):
    fx = grid_city(rows=rows, cols=cols, per_side=per_side, stubs=stubs, seed=rows * cols)
    assert fx.network.n_nodes == fx.meta["nodes"] == (rows + 1) * (cols + 1) + stubs
    assert fx.network.n_segments == fx.meta["segments"]
    assert len(fx.buildings) == fx.meta["buildings"] == rows * cols * 4 * (per_side - 1)
    assert len(fx.zones) == 4


def test_grid_interior_degree():
    fx = grid_city(rows=4, cols=4)
    assert fx.network.n_nodes == 25
    deg = fx.network.degree
    xy = fx.network.nodes
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    interior = (xy > lo).all(axis=1) & (xy < hi).all(axis=1)
    assert interior.sum() == 9 and (deg[interior] == 4).all()
    g = NetworkGraph(fx.network)
    for node in np.flatnonzero(interior):
        pde, _, p4w = degree_proportions(g, int(node))
        assert pde == 0.0 and p4w > 0.3


def test_grid_meshedness():
    g = NetworkGraph(grid_city(rows=5, cols=5).network)
    assert all(meshedness(g, i) > 0.2 for i in range(g.n_nodes))


def test_grid_zero_fill():
    fx = grid_city(fill=0.0)
    assert fx.buildings == [] and fx.meta["buildings"] == 0


def test_grid_rejects_small():
    with pytest.raises(ValidationError):
        grid_city(rows=2)


@pytest.mark.parametrize("branches, lots", [(2, 1), (4, 3), (7, 2)])
def test_suburb_census(branches, lots):
    fx = culdesac_suburb(branches=branches, lots_per_branch=lots)
    net = fx.network
    assert net.n_nodes == fx.meta["nodes"] == 2 * branches + 2
    assert net.n_segments == fx.meta["segments"] == net.n_nodes - 1
    assert (net.degree == 1).sum() == fx.meta["deadends"] == branches + 2
    assert (net.degree == 3).sum() == branches
    assert len(fx.buildings) == fx.meta["buildings"]
    g = NetworkGraph(net)
    assert all(meshedness(g, i) == 0.0 for i in range(g.n_nodes))


def test_suburb_whole_network_deadends():
    # 4 branches: 2k + 2 = 10 nodes, every ego network reaches the whole tree
    g = NetworkGraph(culdesac_suburb(branches=4).network)
    assert degree_proportions(g, 0, k=20)[0] == pytest.approx(6 / 10)


def test_suburb_rejects_one_branch():
    with pytest.raises(ValidationError):
        culdesac_suburb(branches=1)


def test_suburb_less_dense_than_grid():
    def far(fx):
        fabric = UrbanFabric.build(fx.buildings, fx.network)
        return compute_all(fabric).column("sicFAR").mean()

    grid = grid_city(rows=3, cols=3, fill=0.5, height=9.0)
    suburb = culdesac_suburb(branches=4, lots_per_branch=3, lot=60.0, height=9.0)
    assert far(suburb) < far(grid)


def test_fixtures_deterministic():
    a, b = grid_city(stubs=5, seed=3), grid_city(stubs=5, seed=3)
    assert [s.centerline.wkb for s in a.network.segments] == [s.centerline.wkb for s in b.network.segments]
    c1, c2 = composite_city(9, seed=4), composite_city(9, seed=4)
    assert [(x.id, x.footprint.wkb, x.height) for x in c1.buildings] == \
           [(x.id, x.footprint.wkb, x.height) for x in c2.buildings]
    assert [(z.id, z.boundary.wkb, z.population) for z in c1.zones] == \
           [(z.id, z.boundary.wkb, z.population) for z in c2.zones]


def test_written_fixture_round_trips(tmp_path):
    fx = composite_city(4, seed=1)
    paths = fx.write(tmp_path / "a")
    again = composite_city(4, seed=1).write(tmp_path / "b")
    for key in paths:
        assert paths[key].read_bytes() == again[key].read_bytes()
    assert len(load_buildings(paths["buildings"])[0]) == len(fx.buildings)
    assert load_streets(paths["streets"], snap_tol=0.0).n_nodes == fx.network.n_nodes
    assert [z.id for z in load_zones(paths["zones"])] == [z.id for z in fx.zones]


def test_composite_layout():
    fx = composite_city(9, seed=0)
    assert len(fx.zones) == 9
    assert len({z.id for z in fx.zones}) == 9
    assert all(z.population >= 1 for z in fx.zones)
    kinds = {p["kind"] for p in fx.meta["parts"]}
    assert kinds <= {"grid_city", "culdesac_suburb"}


def test_plant_outcome():
    ids = [f"z{i}" for i in range(30)]
    sig = pd.DataFrame({"m": np.linspace(-1, 1, 30)}, index=ids)
    t = plant_outcome(ids, sig, {"m": 2.0}, seed=1, noise=0.0, control_effects=(0.0, 0.0, 0.0))
    assert list(t.columns) == [*CONTROL_NAMES, "outcome"]
    assert t["outcome"].min() == pytest.approx(1.0)
    assert np.allclose(np.diff(t.loc[ids, "outcome"]), 2.0 * np.diff(sig["m"]))


def test_rng_streams():
    a = rng_for(5, 0).standard_normal(4)
    assert (a == rng_for(5, 0).standard_normal(4)).all()
    assert not (a == rng_for(5, 1).standard_normal(4)).any()


# --------------------------------------------------------------------------
# data-generating processes


@pytest.mark.parametrize("dgp", [dgp_error, dgp_lag])
def test_dgp_zero_is_plain_regression(dgp):
    y, X, w = dgp(300, 0.0, [1.0, -2.0], seed=4, intercept=0.5)
    eps = rng_for(4, 3)
    X_ref = eps.standard_normal((300, 2))
    e = eps.standard_normal(300)
    assert (X == X_ref).all()
    assert (y == 0.5 + X @ np.array([1.0, -2.0]) + e).all()


def test_neumann_matches_dense():
    w = knn_weights(random_points(120, 2), k=3)
    W = w.sparse.toarray()
    rhs = np.random.default_rng(0).standard_normal(120)
    for coef in (-0.6, 0.3, 0.8):
        ref = np.linalg.solve(np.eye(120) - coef * W, rhs)
        assert np.abs(neumann_solve(w, coef, rhs) - ref).max() < 1e-8


def test_dgp_relations():
    y, X, w = dgp_error(200, 0.5, [1.0], seed=1)
    W = w.sparse.toarray()
    u = y - X[:, 0]
    e = rng_for(1, 3)
    e.standard_normal((200, 1))
    eps = e.standard_normal(200)
    assert np.abs(u - 0.5 * W @ u - eps).max() < 1e-8
    y, X, w = dgp_lag(200, 0.5, [1.0], seed=1)
    assert np.abs(y - 0.5 * W @ y - X[:, 0] - eps).max() < 1e-8


@pytest.mark.parametrize("dgp", [dgp_error, dgp_lag])
def test_dgp_rejects_unit_parameter(dgp):
    with pytest.raises(ValidationError):
        dgp(50, 1.0, [1.0])


def test_dgp_deterministic():
    a, b = dgp_lag(100, 0.4, [0.5, 0.2], seed=8), dgp_lag(100, 0.4, [0.5, 0.2], seed=8)
    assert (a[0] == b[0]).all() and (a[1] == b[1]).all()
