"""
Refinement of every prior mask of one image as a LangChain runnable chain.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from langchain_core.runnables import RunnableLambda

from planerefine.cluster import derive_seed
from planerefine.config import PipelineConfig
from planerefine.edges import detect_edges, ingest_edge_map
from planerefine.errors import DimensionMismatch, PlaneRefineError
from planerefine.models import RefineReportModel
from planerefine.raster import EdgeMap, GrayImage, check_same_size, load_gray, load_mask, save_bits
from planerefine.refine import RefineReport, refine_mask
from utils.overlay import save_overlay

from .run_ledger import MessageBus, RunLedger
from .runner import StageCallbackHandler, ordered_batch

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


@dataclass(frozen=True)
class MaskJob:
    index: int
    mask_id: str
    prior_path: Path
    out_dir: Path


@dataclass
class MaskOutcome:
    mask_id: str
    report: Optional[RefineReport] = None
    error: Optional[str] = None
    report_path: Optional[Path] = None
    mask_path: Optional[Path] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class RunSummary:
    outcomes: List[MaskOutcome] = field(default_factory=list)
    edges_path: Optional[Path] = None
    overlay_path: Optional[Path] = None

    @property
    def failed(self) -> List[MaskOutcome]:
        return [o for o in self.outcomes if not o.ok]

    @property
    def exit_code(self) -> int:
        return 1 if self.failed else 0


def image_files(folder: Union[str, Path]) -> List[Path]:
    """Image files directly inside ``folder``, sorted by name."""
    folder = Path(folder)
    if not folder.is_dir():
        raise FileNotFoundError(f"Directory not found: {folder}")
    return sorted(p for p in folder.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def _mask_ids(paths: List[Path]) -> List[str]:
    stems = [p.stem for p in paths]
    if len(set(stems)) == len(stems):
        return stems
    return [p.name.replace(".", "_") for p in paths]


class RefinementOrchestrator:
    """
    Runs ``load_prior | refine | persist`` for every prior mask of an image.

    Masks are independent: they run up to ``config.parallelism`` at a time, each
    with a seed derived from the master seed and its position in name order,
    so results do not depend on the degree of parallelism.
    """

    def __init__(self, config: Optional[PipelineConfig] = None, ledger: Optional[RunLedger] = None,
                 bus: Optional[MessageBus] = None):
        self.config = config or PipelineConfig()
        self.ledger = ledger or RunLedger()
        self.bus = bus or MessageBus()
        self.callback_handler = StageCallbackHandler(self.ledger, self.bus)
        self._edges: Optional[EdgeMap] = None
        self._build_chains()

    def _build_chains(self):
        """Compose the per-mask chain."""
        self.mask_chain = (
            RunnableLambda(self._load_prior, name="load_prior")
            | RunnableLambda(self._refine, name="refine")
            | RunnableLambda(self._persist, name="persist")
        )

    def compute_edges(self, image_path: Union[str, Path], image: GrayImage,
                      edges_path: Optional[Union[str, Path]] = None) -> EdgeMap:
        """Edge map for the image: an explicit file, the configured external template, or adaptive Canny."""
        cfg = self.config
        spec = cfg.edge_spec
        external_resize = spec.kind == "external" and spec.resize
        if edges_path is not None:
            edges = ingest_edge_map(edges_path, cfg.edge_threshold, image.size if external_resize else None)
        elif spec.kind == "external":
            edges = ingest_edge_map(spec.resolve(image_path), cfg.edge_threshold,
                                    image.size if external_resize else None)
        else:
            edges = detect_edges(image, cfg.refine.canny_sigma, cfg.refine.canny_low_ratio,
                                 cfg.low_resolution if spec.resize else None)
        if edges.size != image.size:
            raise DimensionMismatch(image.size, edges.size, "edge map")
        return edges

    def _load_prior(self, job: MaskJob) -> Dict[str, Any]:
        prior = load_mask(job.prior_path)
        check_same_size(self._edges, prior, f"prior {job.prior_path.name}")
        return {"job": job, "prior": prior}

    def _refine(self, inputs: Dict[str, Any]) -> Dict[str, Any]:
        job: MaskJob = inputs["job"]
        report = refine_mask(inputs["prior"], self._edges, self.config.refine, mask_id=job.mask_id,
                             seed=derive_seed(self.config.refine.seed, job.index))
        return {"job": job, "report": report}

    def _persist(self, inputs: Dict[str, Any]) -> MaskOutcome:
        job: MaskJob = inputs["job"]
        report: RefineReport = inputs["report"]
        report_path = job.out_dir / f"{job.mask_id}.json"
        mask_path = job.out_dir / f"{job.mask_id}_refined.png"
        report_path.write_text(RefineReportModel.from_report(report).model_dump_json(indent=2) + "\n",
                               encoding="utf-8")
        save_bits(report.refined_mask, mask_path)
        return MaskOutcome(job.mask_id, report, None, report_path, mask_path)

    def run(self, image_path: Union[str, Path], priors_dir: Union[str, Path], out_dir: Union[str, Path],
            gt_dir: Optional[Union[str, Path]] = None, overlay: bool = False,
            edges_path: Optional[Union[str, Path]] = None) -> RunSummary:
        """
        Refine every prior mask in ``priors_dir`` and write the results to ``out_dir``.

        Writes ``<mask_id>.json`` and ``<mask_id>_refined.png`` per mask, ``edges.png``
        and, when requested, ``overlay.png``. Masks that fail are recorded and skipped.
        """
        image_path = Path(image_path)
        image = load_gray(image_path)
        priors = image_files(priors_dir)
        if not priors:
            logger.warning("No prior masks in %s", priors_dir)
            return RunSummary()
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

        self._edges = self.compute_edges(image_path, image, edges_path)
        summary = RunSummary(edges_path=out_dir / "edges.png")
        save_bits(self._edges, summary.edges_path)

        jobs = [MaskJob(i, mask_id, path, out_dir) for i, (mask_id, path) in enumerate(zip(_mask_ids(priors), priors))]
        logger.info("Refining %d masks of %s (parallelism %d)", len(jobs), image_path.name, self.config.parallelism)
        results = ordered_batch(self.mask_chain, jobs, self.config.parallelism, callbacks=[self.callback_handler])

        for job, result in zip(jobs, results):
            if isinstance(result, PlaneRefineError):
                logger.warning("Mask %s failed: %s", job.mask_id, result)
                self.ledger.add_error(job.mask_id, str(result), stage="refine")
                self.ledger.record_outcome(job.mask_id, "failed", error=str(result))
                summary.outcomes.append(MaskOutcome(job.mask_id, error=str(result)))
            elif isinstance(result, Exception):
                raise result
            else:
                status = "fallback" if result.report.used_fallback else "refined"
                self.ledger.record_outcome(job.mask_id, status, prior_iou=result.report.prior_iou)
                summary.outcomes.append(result)

        if overlay:
            ground_truth = [load_mask(p) for p in image_files(gt_dir)] if gt_dir is not None else []
            refined = [o.report.refined for o in summary.outcomes if o.ok]
            if refined or ground_truth:
                summary.overlay_path = save_overlay(image, refined, out_dir / "overlay.png", ground_truth)
        return summary
