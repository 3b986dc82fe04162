"""Tests for the radar-centric vs. baseline comparison script (scripts/compare_modes.py)."""
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "scripts"))

import compare_modes as cm  # noqa: E402


def report(recall, run, **extra):
    values = {
        "recall": recall,
        "precision": 0.5,
        "dx": 0.4,
        "dv": None,
        "longest_undetected_run": run,
        "np": 812.5,
    }
    values.update(extra)
    return values


@pytest.mark.parametrize(
    "rc,baseline,expected",
    [
        (report(0.9, 2), report(0.6, 9), cm.RC_BETTER),
        (report(0.9, 9), report(0.6, 9), cm.RC_BETTER),
        (report(0.6, 3), report(0.6, 9), cm.RC_BETTER),
        (report(0.6, 9), report(0.6, 9), cm.TIE),
        (report(0.5, 9), report(0.6, 3), cm.BASELINE_BETTER),
        (report(0.9, 12), report(0.6, 3), cm.MIXED),
    ],
)
def test_verdict(rc, baseline, expected):
    assert cm.verdict(rc, baseline) == expected


def seed_result(seed, verdict):
    return {
        "seed": seed,
        "scenario": "crossing-vehicle",
        "frames": 60,
        "reports": {cm.RADAR_CENTRIC: report(0.9, 2), cm.BASELINE: report(0.6, 9)},
        "verdict": verdict,
    }


def test_markdown_lists_both_modes_per_seed():
    md = cm.to_markdown([seed_result(0, cm.RC_BETTER), seed_result(1, cm.RC_BETTER)])
    assert md.count("`radar-centric`") == 2
    assert md.count("`hsbof-rs`") == 2
    assert "0.900" in md and "n/a" in md and "812.500" in md
    assert "beats the baseline on every seed" in md


def test_markdown_names_failing_seeds():
    md = cm.to_markdown([seed_result(0, cm.RC_BETTER), seed_result(7, cm.MIXED)])
    assert "1 seed(s)" in md
    assert md.rstrip().endswith("7.")


def test_integer_metrics_are_not_rounded():
    assert cm._fmt(12) == "12"
    assert cm._fmt(0.12345) == "0.123"
    assert cm._fmt(None) == "n/a"


def test_unknown_sensor_is_reported(capsys):
    assert cm.main(["--sensors", "roof", "--seeds", "0"]) == 1
    assert "[ERROR]" in capsys.readouterr().err


@pytest.mark.slow
def test_compare_seed_runs_both_modes():
    config = cm.load_config(None)
    result = cm.compare_seed(0, "crossing-vehicle", config, (config.pipeline.sensor("front"),), duration=1.0)
    assert result["frames"] == 10
    assert set(result["reports"]) == set(cm.MODES)
    for mode in cm.MODES:
        assert result["reports"][mode]["frames"] == 10
    assert result["verdict"] in (cm.RC_BETTER, cm.TIE, cm.MIXED, cm.BASELINE_BETTER)


@pytest.mark.slow
def test_warmup_frames_are_not_scored():
    config = cm.load_config(None)
    result = cm.compare_seed(0, "crossing-vehicle", config, (config.pipeline.sensor("front"),), duration=1.0, warmup=4)
    assert result["frames"] == 10
    for mode in cm.MODES:
        assert result["reports"][mode]["frames"] == 6



def _front_results(scenario, warmup=0):
    config = cm.load_config(None)
    front = (config.pipeline.sensor("front"),)
    return [cm.compare_seed(seed, scenario, config, front, warmup=warmup) for seed in range(5)]


@pytest.mark.slow
def test_radar_centric_tracks_the_crossing_vehicle():
    results = _front_results("crossing-vehicle")
    rc = [r["reports"][cm.RADAR_CENTRIC] for r in results]
    baseline = [r["reports"][cm.BASELINE] for r in results]
    assert all(report["dv"] is not None for report in rc)
    assert np.mean([report["recall"] for report in rc]) >= 0.85
    assert np.mean([report["dv"] for report in rc]) <= 1.0
    assert np.mean([report["recall"] for report in rc]) >= np.mean([report["recall"] for report in baseline])
    for r in results:
        for mode in cm.MODES:
            assert r["reports"][mode]["particles"]["max"] < 10_000


@pytest.mark.slow
def test_radar_centric_tracks_the_crossing_pedestrian_after_warmup():
    for r in _front_results("crossing-pedestrian", warmup=8):
        rc, baseline = r["reports"][cm.RADAR_CENTRIC], r["reports"][cm.BASELINE]
        assert rc["recall"] >= 0.6
        assert baseline["recall"] < rc["recall"]
        assert rc["particles"]["max"] < 10_000


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
