import json
import time

import pytest

from conftest import square_mask
from orchestrator import MessageBus, RefinementOrchestrator, RunLedger, StageCallbackHandler, ordered_batch
from planerefine.config import PipelineConfig
from planerefine.raster import save_bits, save_gray
from planerefine.synthetic import make_scene


def slow_square(x):
    time.sleep(0.01 * (5 - x))
    if x == 2:
        raise ValueError("two")
    return x * x


class TestOrderedBatch:
    def test_results_keep_input_order(self):
        assert ordered_batch(lambda x: x + 1, list(range(8)), max_concurrency=4) == list(range(1, 9))

    def test_exceptions_stay_in_place(self):
        results = ordered_batch(slow_square, list(range(5)), max_concurrency=3)
        assert results[:2] == [0, 1] and results[3:] == [9, 16]
        assert isinstance(results[2], ValueError)

    def test_empty(self):
        assert ordered_batch(abs, [], max_concurrency=2) == []

    def test_rejects_zero_concurrency(self):
        with pytest.raises(ValueError):
            ordered_batch(abs, [1], max_concurrency=0)

    def test_callbacks_time_every_item(self):
        ledger, bus = RunLedger(), MessageBus()
        handler = StageCallbackHandler(ledger, bus)
        ordered_batch(slow_square, list(range(5)), max_concurrency=2, name="square", callbacks=[handler])
        summary = handler.get_performance_summary()
        assert set(summary["stage_durations"]) == {"square"}
        assert summary["total_events"] == 10
        assert summary["errors"] == ["two"]
        assert len(ledger.get_state("timeline")) == 10
        assert len(bus.get_messages("stage_events")) == 10


class TestRunLedger:
    def test_outcomes_and_summary(self):
        ledger = RunLedger()
        ledger.record_outcome("a", "refined")
        ledger.record_outcome("b", "failed", error="empty")
        ledger.add_error("b", "empty", stage="refine")
        assert ledger.failed_items() == ["b"]
        summary = ledger.get_execution_summary()
        assert summary["status_counts"] == {"refined": 1, "failed": 1}
        assert summary["errors_count"] == 1
        ledger.clear()
        assert ledger.get_execution_summary()["items"] == 0

    def test_bus_delivers_and_survives_bad_subscriber(self):
        bus = MessageBus()
        seen = []
        bus.subscribe("t", lambda envelope: 1 / 0)
        bus.subscribe("t", seen.append)
        bus.publish("t", {"n": 1}, sender="x")
        assert seen[0]["content"] == {"n": 1}
        assert bus.get_messages("t", limit=1)[0]["sender"] == "x"
        bus.clear_topic("t")
        assert bus.get_messages("t") == []


@pytest.fixture
def image_with_priors(tmp_path):
    scene = make_scene(21)
    save_gray(scene.image, tmp_path / "image.png")
    save_bits(scene.edges, tmp_path / "image_edges.png")
    (tmp_path / "priors").mkdir()
    save_bits(scene.prior, tmp_path / "priors" / "plane.png")
    return tmp_path


class TestRefinementOrchestrator:
    def test_external_template_and_failed_mask(self, image_with_priors):
        root = image_with_priors
        save_bits(square_mask(12, 12, 2, 2, 8, 8), root / "priors" / "small.png")
        config = PipelineConfig(edge_source="external:{parent}/{stem}_edges.png")
        orchestrator = RefinementOrchestrator(config)
        summary = orchestrator.run(root / "image.png", root / "priors", root / "out")

        assert [o.mask_id for o in summary.outcomes] == ["plane", "small"]
        assert [o.mask_id for o in summary.failed] == ["small"]
        assert summary.exit_code == 1
        assert orchestrator.ledger.failed_items() == ["small"]
        report = json.loads((root / "out" / "plane.json").read_text(encoding="utf-8"))
        assert report["mask_id"] == "plane"
        assert summary.edges_path.read_bytes() == (root / "image_edges.png").read_bytes()
        stages = orchestrator.callback_handler.get_performance_summary()["stage_durations"]
        assert {"load_prior", "refine", "persist"} <= set(stages)

    def test_missing_external_map_names_path(self, image_with_priors):
        config = PipelineConfig(edge_source="external:{parent}/{stem}_hed.png")
        with pytest.raises(FileNotFoundError, match="image_hed.png"):
            RefinementOrchestrator(config).run(image_with_priors / "image.png", image_with_priors / "priors",
                                               image_with_priors / "out")

    def test_clean_run(self, image_with_priors):
        root = image_with_priors
        summary = RefinementOrchestrator().run(root / "image.png", root / "priors", root / "out",
                                               edges_path=root / "image_edges.png")
        assert summary.exit_code == 0
        assert summary.outcomes[0].mask_path.is_file()
        assert summary.overlay_path is None
