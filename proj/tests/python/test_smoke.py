import json
import math

import pytest

import tandem


def wave_columns(rows=96):
    state = 99
    hour, drift, y = [], [], []
    for i in range(rows):
        state = (state * 1664525 + 1013904223) % 2**32
        h = float(i % 24)
        hour.append(h)
        drift.append(3.0 * ((state >> 8) / 16777216.0))
        y.append(5.0 * math.sin(2.0 * math.pi * h / 24.0) + 2.0)
    return {"hour": hour, "drift": drift, "y": y}


@pytest.fixture
def wave():
    return tandem.DataTable.from_dict(wave_columns(), target="y", task="regression")


def test_table_round_trip(wave):
    assert len(wave) == 96
    assert wave.target == "y"
    assert wave.task == "regression"
    assert wave.column_names == ["hour", "drift", "y"]
    assert wave.feature_names == ["hour", "drift"]
    cells = wave.to_dict()
    assert cells["hour"][:4] == [0.0, 1.0, 2.0, 3.0]


def test_missing_cells_and_categories_round_trip():
    table = tandem.DataTable.from_dict(
        {"color": ["red", None, "blue"], "x": [1.0, None, 3.0], "label": ["a", "b", "a"]},
        target="label",
        task="classification",
    )
    cells = table.to_dict()
    assert cells["color"] == ["red", None, "blue"]
    assert cells["x"] == [1.0, None, 3.0]


def test_split_partitions_rows(wave):
    train, val, test = tandem.split(wave, seed=3)
    assert len(train) + len(val) + len(test) == len(wave)
    assert len(train) > len(val)


def test_meta_features_have_names(wave):
    meta = tandem.meta_features(wave)
    names = tandem.meta_feature_names()
    assert len(meta) == len(names) == 18
    assert all(math.isfinite(v) for v in meta)


def test_pipeline_fit_apply(wave):
    specs = [
        {"kind": "cyclic_encode", "params": {"period": 24.0}, "inputs": ["hour"]},
        {"kind": "standard_scale", "inputs": ["drift"]},
    ]
    assert tandem.validate_step(specs, wave) == []
    pipeline = tandem.fit_pipeline(specs, wave)
    assert len(pipeline) == 2
    assert pipeline.specs()[0]["kind"] == "cyclic_encode"
    transformed = tandem.apply_pipeline(pipeline, wave)
    assert "hour_sin" in transformed.column_names
    assert "hour_cos" in transformed.column_names


def test_validate_step_reports_ghost_columns(wave):
    violations = tandem.validate_step([{"kind": "log1p", "inputs": ["ghost"]}], wave)
    assert violations
    assert "ghost" in violations[0]


def test_cyclic_feature_beats_raw_ridge(wave):
    train, val, _ = tandem.split(wave, seed=0)
    config = tandem.default_config("ridge")
    raw = tandem.train_and_score("ridge", config, train, val)
    pipeline = tandem.fit_pipeline(
        [{"kind": "cyclic_encode", "params": {"period": 24.0}, "inputs": ["hour"]}], train
    )
    better = tandem.train_and_score(
        "ridge", config, tandem.apply_pipeline(pipeline, train), tandem.apply_pipeline(pipeline, val)
    )
    assert better > raw + 1.0


def test_expected_improvement_limits():
    assert tandem.expected_improvement(2.0, 0.0, 1.0) == 1.0
    assert tandem.expected_improvement(0.5, 0.0, 1.0) == 0.0
    assert tandem.expected_improvement(0.0, 1.0, 0.0) == pytest.approx(
        1.0 / math.sqrt(2.0 * math.pi)
    )


def test_pareto_select_indices():
    points = [(1.0, 1.0), (2.0, 0.5), (0.5, 2.0), (1.5, 1.5), (0.4, 0.4)]
    assert tandem.pareto_select(points) == [1, 2, 3]
    assert tandem.pareto_select([(1.0, 1.0), (1.0, 1.0)]) == [0, 1]


def test_simulate_neutral_balances_the_reference_budget():
    sim = tandem.simulate_neutral(200, 0.9)
    assert sim["n_fe"] == 100
    assert sim["n_hpo"] == 100
    assert sim["q_trace"][0] == pytest.approx(0.8)
    assert max(abs(q) for q in sim["q_trace"]) < 1.0
    assert tandem.balanced_prior_ok(200, 0.9)
    assert not tandem.balanced_prior_ok(200, tandem.balanced_prior_bound(200))


def test_errors_surface_as_the_module_exception():
    with pytest.raises(tandem.Error):
        tandem.load_dataset("/nonexistent.csv", "/nonexistent.json")
    with pytest.raises(tandem.Error):
        tandem.default_config("mystery")


def test_end_to_end_run(tmp_path, wave):
    columns = wave_columns()
    header = ["hour", "drift", "y"]
    rows = zip(*(columns[name] for name in header))
    csv_lines = [",".join(header)]
    csv_lines += [",".join(repr(cell) for cell in row) for row in rows]
    (tmp_path / "wave.csv").write_text("\n".join(csv_lines) + "\n")
    (tmp_path / "wave.schema.json").write_text(
        json.dumps(
            {
                "target": "y",
                "task": "regression",
                "columns": {"hour": "numeric", "drift": "numeric", "y": "numeric"},
            }
        )
    )
    config = {
        "dataset": str(tmp_path / "wave.csv"),
        "schema": str(tmp_path / "wave.schema.json"),
        "learner": "ridge",
        "budget": 10,
        "seed": 5,
        "backend": "scripted",
        "script": [
            {
                "reason": "encode the daily cycle",
                "way": "cyclic encode hour",
                "required_feature_columns": ["hour"],
                "operations": [
                    {"kind": "cyclic_encode", "params": {"period": 24.0}, "inputs": ["hour"]}
                ],
            }
        ],
        "output_dir": str(tmp_path / "out"),
    }
    (tmp_path / "run.json").write_text(json.dumps(config))

    report = tandem.run(str(tmp_path / "run.json"))
    assert report["best"]["validation_score"] > report["root_score"]
    assert report["scheduler"]["n_fe"] + report["scheduler"]["n_hpo"] == 10
    assert (tmp_path / "out" / "report.json").exists()
    assert (tmp_path / "out" / "curve.csv").exists()

    on_disk = json.loads((tmp_path / "out" / "report.json").read_text())
    assert on_disk["best"]["validation_score"] == report["best"]["validation_score"]
