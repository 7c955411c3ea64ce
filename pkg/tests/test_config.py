import os
from pathlib import Path

import pytest
from pydantic import ValidationError

from planerefine.config import PipelineConfig, RefineConfig, load_config, parse_edge_source


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for key in list(os.environ):
        if key.startswith("PLANEREFINE_"):
            monkeypatch.delenv(key)


def test_defaults():
    cfg = load_config()
    assert cfg.refine.fallback_iou == 0.75
    assert cfg.refine.vicinity_radius == 40.0
    assert cfg.refine.widen_radius == 5
    assert cfg.edge_source == "adaptive-canny"
    assert cfg.low_resolution == (640, 480)
    assert cfg.parallelism == 1


def test_config_file_feeds_both_levels(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("PLANEREFINE_FALLBACK_IOU=0.6\nPLANEREFINE_PARALLELISM=3\n", encoding="utf-8")
    cfg = load_config(path)
    assert cfg.refine.fallback_iou == 0.6
    assert cfg.parallelism == 3


def test_environment_is_read(monkeypatch):
    monkeypatch.setenv("PLANEREFINE_SEED", "7")
    assert load_config().refine.seed == 7


def test_overrides_win(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("PLANEREFINE_SEED=9\n", encoding="utf-8")
    cfg = load_config(path, {"seed": 3, "PLANEREFINE_VICINITY_RADIUS": "30", "low_resolution": "320x240"})
    assert cfg.refine.seed == 3
    assert cfg.refine.vicinity_radius == 30.0
    assert cfg.low_resolution == (320, 240)


def test_low_resolution_from_config_file(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("PLANEREFINE_LOW_RESOLUTION=320x240\n", encoding="utf-8")
    assert load_config(path).low_resolution == (320, 240)


def test_low_resolution_from_environment(monkeypatch):
    monkeypatch.setenv("PLANEREFINE_LOW_RESOLUTION", "800X600")
    assert load_config().low_resolution == (800, 600)


def test_malformed_low_resolution_in_environment(monkeypatch):
    monkeypatch.setenv("PLANEREFINE_LOW_RESOLUTION", "800")
    with pytest.raises(ValidationError):
        load_config()


def test_unknown_override():
    with pytest.raises(ValueError, match="Unknown configuration key"):
        load_config(overrides={"colour": "red"})


@pytest.mark.parametrize("overrides", [
    {"fallback_iou": 1.5},
    {"harris_window": 4},
    {"harris_k": 0.5},
    {"parallelism": 0},
    {"edge_source": "sobel"},
    {"low_resolution": "640"},
    {"cost_target": "image"},
    {"hough_rel_votes": 1.5},
    {"min_edge_overlap": -0.1},
])
def test_invalid_values(overrides):
    with pytest.raises(ValidationError):
        load_config(overrides=overrides)


def test_missing_config_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "absent.env")


def test_settings_are_frozen():
    with pytest.raises(ValidationError):
        RefineConfig().seed = 4


class TestEdgeSource:
    def test_adaptive(self):
        assert parse_edge_source("adaptive-canny").kind == "adaptive-canny"
        lowres = parse_edge_source("adaptive-canny-lowres")
        assert lowres.kind == "adaptive-canny" and lowres.resize

    def test_external_template(self):
        spec = parse_edge_source("external:{parent}/hed/{stem}.png")
        assert spec.kind == "external" and not spec.resize
        assert spec.resolve(Path("data") / "room.jpg") == Path("data") / "hed" / "room.png"

    def test_external_resized(self):
        spec = parse_edge_source("external-resized:{name}.edges")
        assert spec.resize
        assert spec.resolve("a/b.png") == Path("b.png.edges")

    @pytest.mark.parametrize("value", ["canny", "external:", "external-resized:"])
    def test_rejects(self, value):
        with pytest.raises(ValueError):
            parse_edge_source(value)

    def test_adaptive_has_no_path(self):
        with pytest.raises(ValueError):
            parse_edge_source("adaptive-canny").resolve("x.png")

    def test_pipeline_exposes_parsed_source(self):
        cfg = PipelineConfig(edge_source="external:{stem}_e.png")
        assert cfg.edge_spec.template == "{stem}_e.png"
