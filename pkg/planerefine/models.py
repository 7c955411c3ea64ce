"""
Pydantic models for files read and written by the pipeline.
"""

from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Vertex = Tuple[float, float]


class Difficulty(str, Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"


class PolygonModel(BaseModel):
    """Polygon file: {"vertices": [[x, y], ...]}."""
    vertices: List[Vertex] = Field(..., min_length=3, description="Vertices in order, implicitly closed")


class EdgeChoiceModel(BaseModel):
    """Endpoints picked for one refined edge."""
    start: Vertex
    end: Vertex
    cost: float = Field(..., ge=0.0, le=1.0)


class RefineReportModel(BaseModel):
    """Per-mask refinement report."""
    mask_id: str
    vertices: List[Vertex] = Field(..., description="Refined polygon")
    used_fallback: bool
    assembly_failed: bool
    prior_iou: float = Field(..., description="IoU of the assembled polygon with the prior (0 if none)")
    output_iou: float = Field(..., description="IoU of the returned polygon with the prior")
    seed: int
    edges: List[EdgeChoiceModel] = Field(default_factory=list)

    @classmethod
    def from_report(cls, report) -> "RefineReportModel":
        return cls(
            mask_id=report.mask_id,
            vertices=[(v.x, v.y) for v in report.refined.vertices],
            used_fallback=report.used_fallback,
            assembly_failed=report.assembly_failed,
            prior_iou=report.prior_iou,
            output_iou=report.output_iou,
            seed=report.seed,
            edges=[EdgeChoiceModel(start=tuple(e.start), end=tuple(e.end), cost=min(1.0, max(0.0, e.cost)))
                   for e in report.edges],
        )


class ManifestScene(BaseModel):
    """One scene entry; paths are relative to the manifest's directory."""
    model_config = ConfigDict(extra="forbid")

    id: str = Field(..., min_length=1)
    image: str
    difficulty: Difficulty
    priors: List[str] = Field(..., min_length=1, description="Prior mask files from the upstream segmenter")
    gt_masks: List[str] = Field(default_factory=list, description="Ground-truth mask files")
    gt_via: Optional[str] = Field(None, description="VIA polygon annotation file")
    edge_maps: Dict[str, str] = Field(default_factory=dict, description="External edge maps by method key")

    @model_validator(mode="after")
    def _has_ground_truth(self) -> "ManifestScene":
        if not self.gt_masks and not self.gt_via:
            raise ValueError("scene needs gt_masks or gt_via")
        return self


class Manifest(BaseModel):
    scenes: List[ManifestScene] = Field(..., min_length=1)

    @field_validator("scenes")
    @classmethod
    def _unique_ids(cls, scenes: List[ManifestScene]) -> List[ManifestScene]:
        seen = set()
        for scene in scenes:
            if scene.id in seen:
                raise ValueError(f"duplicate scene id '{scene.id}'")
            seen.add(scene.id)
        return scenes


class SceneScoreModel(BaseModel):
    scene_id: str
    difficulty: Difficulty
    scores: Dict[str, float] = Field(..., description="Mean matched IoU per method")


class SkippedSceneModel(BaseModel):
    scene_id: str
    error: str


class BenchmarkModel(BaseModel):
    """Per-scene and per-category benchmark results."""
    methods: List[str]
    scenes: List[SceneScoreModel]
    categories: Dict[str, Dict[str, Optional[float]]]
    skipped: List[SkippedSceneModel] = Field(default_factory=list)
