from modules.study import DeskStudyConfig, run_desk_study


def test_pooled_levels_beat_the_global_window():
    results = run_desk_study(DeskStudyConfig(seed=0), with_invariance=False)
    accuracy = results["accuracy"].set_index("levels")["accuracy"]

    assert list(accuracy.index) == ["level1", "level1+level2+level3"]
    assert accuracy["level1+level2+level3"] > accuracy["level1"]
    assert results["invariance"].empty


def test_reports_are_written(tmp_path):
    results = run_desk_study(DeskStudyConfig(seed=1, per_class=6), out_dir=str(tmp_path))

    for name in ("desk_accuracy.csv", "desk_invariance.csv", "desk_report.txt"):
        assert (tmp_path / name).exists()
    invariance = results["invariance"]
    assert len(invariance) == 2 * len(DeskStudyConfig().sweep)
    assert list(invariance.columns) == ["levels", "kind", "parameter", "accuracy", "feature_drift"]
    assert "MOP DESK STUDY" in (tmp_path / "desk_report.txt").read_text()
