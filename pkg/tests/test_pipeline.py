import json

import numpy as np
import pandas as pd
import pytest
from shapely.geometry import box

from urbanmorph import cli
from urbanmorph.config import load_config, parse_config
from urbanmorph.errors import NumericalError, ValidationError
from urbanmorph.hotspots import classify, fisher_jenks, hotspots, within_class_ssd
from urbanmorph.ingest import Zone
from urbanmorph.maps import NO_DATA, choropleth_svg, export_maps
from urbanmorph.pipeline import Pipeline, distinct_values
from urbanmorph.synthcity import CONTROL_NAMES, composite_with_outcome

# --------------------------------------------------------------------------
# natural breaks and hotspots


def test_breaks_obvious_gap():
    values = [1, 2, 3, 10, 11, 12]
    breaks = fisher_jenks(values, 2)
    assert breaks.tolist() == [3.0, 12.0]
    assert classify(values, breaks).tolist() == [0, 0, 0, 1, 1, 1]


@pytest.mark.parametrize("values, k", [([4.0] * 6, 2), ([1.0, 2.0], 3), ([1.0, np.nan, 2.0], 2)])
def test_breaks_infeasible(values, k):
    with pytest.raises(ValidationError):
        fisher_jenks(values, k)


def random_partition_ssd(x, k, rng):
    cuts = np.sort(rng.choice(np.arange(1, len(x)), size=k - 1, replace=False))
    labels = np.searchsorted(cuts, np.arange(len(x)), side="right")
    return within_class_ssd(x, labels)


def test_breaks_beat_random_partitions():
    rng = np.random.default_rng(2024)
    x = np.sort(rng.gamma(2.0, 5.0, 60))
    labels = classify(x, fisher_jenks(x, 4))
    best = within_class_ssd(x, labels)
    assert len(np.unique(labels)) == 4
    assert all(best <= random_partition_ssd(x, 4, rng) + 1e-9 for _ in range(1000))


def test_breaks_exhaustive_small():
    rng = np.random.default_rng(7)
    x = np.sort(rng.normal(size=9))
    best = within_class_ssd(x, classify(x, fisher_jenks(x, 3)))
    brute = min(within_class_ssd(x, np.searchsorted([i, j], np.arange(9), side="right"))
                for i in range(1, 9) for j in range(i + 1, 9))
    assert best == pytest.approx(brute, abs=1e-12)


def test_hotspots_pick_smallest_errors():
    ids = list("abcdefgh")
    values = pd.Series([1, 2, 3, 2, 50, 51, 52, 49.0], index=ids)
    errors = pd.Series([0, 0, 0, 0, 0.5, -0.1, 0.3, -0.2], index=ids)
    out = hotspots(values, errors, k=2)
    assert list(out.index) == ["f", "h"]
    assert (out["class"] == 1).all()


def test_hotspots_missing_error():
    values = pd.Series([1.0, 2.0, 9.0], index=list("abc"))
    with pytest.raises(ValidationError):
        hotspots(values, pd.Series([0.0, 0.0], index=list("ab")), k=2)


# --------------------------------------------------------------------------
# maps

ZONES = [Zone("west", box(0, 0, 10, 10)), Zone("east", box(10, 0, 20, 10))]


def test_two_zone_svg():
    svg = choropleth_svg(ZONES, pd.Series({"west": 1.0, "east": 2.0}), "v")
    assert svg.count("<path") == 2
    assert svg.count("<rect x=") == 2
    assert NO_DATA not in svg


def test_no_data_hatched():
    svg = choropleth_svg(ZONES, pd.Series({"west": 1.0, "east": np.nan}), "v")
    assert svg.count(f'fill="{NO_DATA}"') == 2  # the zone and its legend entry
    assert "no data" in svg


def test_export_deterministic(tmp_path):
    frame = pd.DataFrame({"v": [3.0, np.nan]}, index=["west", "east"])
    a = export_maps(ZONES, frame, ["v"], tmp_path / "a")
    b = export_maps(list(reversed(ZONES)), frame, ["v"], tmp_path / "b")
    assert [p.read_bytes() for p in a] == [p.read_bytes() for p in b]
    gj = json.loads(a[0].read_text())
    assert [f["properties"] for f in gj["features"]] == [{"zone_id": "east", "v": None}, {"zone_id": "west", "v": 3.0}]


def test_export_missing_column(tmp_path):
    with pytest.raises(ValidationError):
        export_maps(ZONES, pd.DataFrame({"v": [1.0, 2.0]}, index=["west", "east"]), ["w"], tmp_path)


# --------------------------------------------------------------------------
# config

BASE = {"inputs": {"buildings": "b.geojson", "streets": "s.geojson"}}


def test_config_defaults():
    cfg = parse_config(BASE)
    assert cfg.weights.k == 3 and cfg.significance == 0.05 and cfg.stage2.candidates == "all"


@pytest.mark.parametrize("raw", [
    {**BASE, "colour": "red"},
    {"inputs": {**BASE["inputs"], "footprints": "x"}},
    {**BASE, "weights": {"k": 3, "kind": "queen"}},
    {**BASE, "significance": 1.5},
    {**BASE, "stage1": {"outcome": "y", "candidates": []}},
])
def test_config_rejects(raw):
    with pytest.raises(ValidationError):
        parse_config(raw)


def test_config_relative_paths(tmp_path):
    (tmp_path / "c.yaml").write_text("inputs:\n  buildings: b.geojson\n  streets: /abs/s.geojson\n")
    cfg = load_config(tmp_path / "c.yaml")
    assert cfg.inputs.buildings == str(tmp_path / "b.geojson")
    assert cfg.inputs.streets == "/abs/s.geojson"


def test_digest_ignores_output():
    a = parse_config({**BASE, "output": "x"})
    b = parse_config({**BASE, "output": "y"})
    assert a.digest() == b.digest() != parse_config({**BASE, "permutations": 99}).digest()


def test_distinct_values_noise():
    assert distinct_values([1.0, 1.0 + 1e-14, 2.0, np.nan]) == 2
    assert distinct_values([0.1, 0.2, 0.3]) == 3


# --------------------------------------------------------------------------
# full runs


def synth_config(directory, fixture, **extra):
    paths = fixture.write(directory)
    raw = {
        "inputs": {"buildings": str(paths["buildings"]), "streets": str(paths["streets"]),
                   "zones": str(paths["zones"]), "attributes": [str(paths["attributes"])], "snap_tol": 0.0},
        "centre": fixture.meta["centre"],
        "output": str(directory / "out"),
        "stage1": {"outcome": "outcome", "candidates": list(CONTROL_NAMES)},
        "permutations": 199,
    }
    raw.update(extra)
    return parse_config(raw)


@pytest.fixture(scope="module")
def planted(tmp_path_factory):
    d = tmp_path_factory.mktemp("planted")
    pipe = Pipeline(synth_config(d, composite_with_outcome(81, seed=0)))
    pipe.run()
    return pipe


def test_stage2_target_is_stage1_residuals(planted):
    s1, s2 = planted.stage1(), planted.stage2()
    assert np.abs(s2.target - s1.residuals).max() <= 1e-12


def test_stage_residual_definition(planted):
    for st in (planted.stage1(), planted.stage2()):
        if st.choice == "error":
            W = planted.weights().sparse.toarray()
            X = planted.model_frame()[0][st.variables].to_numpy()
            u = st.target - st.fit.coef[0] - X @ st.fit.coef[1:]
            assert np.abs(st.residuals - (u - st.fit.lam * W @ u)).max() < 1e-9
        elif st.choice == "ols":
            assert np.array_equal(st.residuals, st.ols.resid)


def test_stage1_finds_planted_controls(planted):
    assert {"ctrl_age", "ctrl_deprivation"} <= set(planted.stage1().variables)


def test_outputs_written(planted):
    out = planted.out
    manifest = json.loads((out / "manifest.json").read_text())
    for name in ("zone_matrix.csv", "hotspots.csv", "models/summary.json", "models/residuals.csv",
                 "stage1_selection.json", "stage2_selection.json", "transform_manifest.csv"):
        assert name in manifest["checksums"]
    assert any(k.startswith("maps/map_") for k in manifest["checksums"])
    assert set(manifest["timings"]) >= {"stage1", "stage2"}
    hot = pd.read_csv(out / "hotspots.csv")
    assert 1 <= len(hot) <= 2
    excluded = pd.read_csv(out / "excluded_columns.csv")
    assert set(excluded["column"]).isdisjoint(planted.stage2().variables)


def test_pure_controls_fail_quality_gate(tmp_path):
    fixture = composite_with_outcome(81, seed=0, effects={"sicFAR": 0.0}, noise=0.3)
    pipe = Pipeline(synth_config(tmp_path, fixture))
    s2 = pipe.stage2()
    assert s2.selection.quality_gate_failed


# --------------------------------------------------------------------------
# command line


def test_cli_synth_and_pipeline(tmp_path, capsys):
    d = tmp_path / "city"
    assert cli.main(["synth", "composite", "--tiles", "25", "--out", str(d), "--seed", "3"]) == 0
    assert (d / "config.yaml").exists()
    code = cli.main(["select", "--config", str(d / "config.yaml"), "--out", str(tmp_path / "o")])
    assert code == 0
    assert (tmp_path / "o" / "stage2_selection.json").exists()
    capsys.readouterr()


def test_cli_validation_exit(tmp_path, capsys):
    (tmp_path / "bad.yaml").write_text("inputs:\n  buildings: b\n  streets: s\nmystery: 1\n")
    assert cli.main(["metrics", "--config", str(tmp_path / "bad.yaml")]) == 2
    assert "mystery" in capsys.readouterr().err


def test_cli_missing_input_exit(tmp_path, capsys):
    code = cli.main(["metrics", "--buildings", str(tmp_path / "none.geojson"),
                     "--streets", str(tmp_path / "none.geojson"), "--out", str(tmp_path)])
    assert code == 2


def test_cli_numerical_exit(monkeypatch, capsys):
    def boom(args):
        raise NumericalError("singular")

    monkeypatch.setattr(cli, "dispatch", boom)
    assert cli.main(["metrics", "--buildings", "b", "--streets", "s"]) == 3
    assert "singular" in capsys.readouterr().err
