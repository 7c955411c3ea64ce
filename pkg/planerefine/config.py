"""
Configuration for the refinement pipeline.

Every tunable is a settings field so it can come from a ``KEY=value`` config
file, the environment (``PLANEREFINE_<KEY>``) or explicit overrides.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Dict, Literal, Optional, Tuple, Union

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, NoDecode, SettingsConfigDict

ENV_PREFIX = "PLANEREFINE_"

_SETTINGS = SettingsConfigDict(
    env_prefix=ENV_PREFIX,
    env_file_encoding="utf-8",
    extra="ignore",
    frozen=True,
)


class RefineConfig(BaseSettings):
    """Tunables of the per-mask refinement algorithm."""

    model_config = _SETTINGS

    widen_radius: int = Field(5, gt=0, description="Chebyshev radius of the widened prior contour")
    canny_sigma: float = Field(1.4, gt=0, description="Gaussian blur sigma before Sobel")
    canny_low_ratio: float = Field(0.5, gt=0, lt=1, description="Low hysteresis threshold as a fraction of high")
    harris_k: float = Field(0.04, ge=0.02, le=0.2, description="Harris trace weight")
    harris_window: int = Field(5, ge=3, description="Odd side of the structure tensor window")
    harris_rel_threshold: float = Field(0.1, gt=0, le=1, description="Corner response relative to the maximum")
    corner_removal_radius: float = Field(4.0, gt=0, description="Edge pixels this close to a corner are removed")
    dbscan_eps: float = Field(3.0, gt=0)
    dbscan_min_pts: int = Field(4, gt=0)
    min_cluster_px: int = Field(15, gt=0, description="Smaller edge clusters are discarded")
    max_aspect: float = Field(0.2, gt=0, le=1, description="Largest accepted lambda2/lambda1 of a cluster")
    ransac_tol: float = Field(2.0, gt=0)
    ransac_iterations: int = Field(200, gt=0)
    extension_band_radius: float = Field(3.0, gt=0)
    hough_votes: int = Field(20, gt=0)
    hough_rho_merge: float = Field(10.0, gt=0, description="Peaks closer than this in rho are merged (px)")
    hough_theta_merge_deg: float = Field(5.0, gt=0, description="Peaks closer than this in theta are merged (deg)")
    hough_rel_votes: float = Field(0.3, ge=0, le=1, description="Later Hough lines need this share of the first line's votes")
    vicinity_radius: float = Field(40.0, gt=0)
    min_edge_overlap: float = Field(0.5, ge=0, le=1, description="Least share of an edge's 1-px line next to edge pixels")
    min_edge_support: int = Field(15, gt=0, description="Least number of edge-supported pixels on a kept edge")
    edge_cluster_eps: float = Field(15.0, gt=0)
    candidate_samples: int = Field(10, gt=0)
    candidate_sample_radius: float = Field(25.0, gt=0)
    fallback_iou: float = Field(0.75, gt=0, le=1)
    max_fallback_points: int = Field(20, ge=3)
    cost_target: Literal["edges", "prior"] = Field("edges", description="Mask scored by the overlap term")
    seed: int = Field(0, ge=0)

    @field_validator("harris_window")
    @classmethod
    def _odd_window(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError("harris_window must be odd")
        return value


@dataclass(frozen=True)
class EdgeSourceSpec:
    """Parsed form of the ``edge_source`` setting."""

    kind: Literal["adaptive-canny", "external"]
    template: Optional[str] = None
    resize: bool = False

    def resolve(self, image_path: Union[str, Path]) -> Path:
        """Fill the path template for a given image."""
        image_path = Path(image_path)
        if self.template is None:
            raise ValueError("adaptive-canny has no external path")
        return Path(self.template.format(stem=image_path.stem, name=image_path.name,
                                         parent=str(image_path.parent)))


def parse_edge_source(value: str) -> EdgeSourceSpec:
    """
    Parse ``adaptive-canny``, ``adaptive-canny-lowres``, ``external:<template>`` or
    ``external-resized:<template>``.

    For adaptive Canny ``resize`` means detection at the low resolution.
    """
    if value == "adaptive-canny":
        return EdgeSourceSpec("adaptive-canny")
    if value == "adaptive-canny-lowres":
        return EdgeSourceSpec("adaptive-canny", resize=True)
    for prefix, resize in (("external-resized:", True), ("external:", False)):
        if value.startswith(prefix):
            template = value[len(prefix):]
            if not template:
                raise ValueError(f"Edge source '{value}' is missing a path template")
            return EdgeSourceSpec("external", template, resize)
    raise ValueError(
        f"Unknown edge source '{value}'; expected adaptive-canny, adaptive-canny-lowres, external:<path> or external-resized:<path>"
    )


class PipelineConfig(BaseSettings):
    """Settings of a whole CLI run."""

    model_config = _SETTINGS

    refine: RefineConfig = Field(default_factory=RefineConfig)
    edge_source: str = Field("adaptive-canny", description="adaptive-canny[-lowres] | external:<tpl> | external-resized:<tpl>")
    edge_threshold: int = Field(128, ge=0, le=255, description="Gray level at which external edge maps read true")
    low_resolution: Annotated[Tuple[int, int], NoDecode] = Field((640, 480), description="Size used by low-resolution edge detection")
    parallelism: int = Field(1, ge=1)

    @field_validator("edge_source")
    @classmethod
    def _known_source(cls, value: str) -> str:
        parse_edge_source(value)
        return value

    @field_validator("low_resolution", mode="before")
    @classmethod
    def _parse_size(cls, value):
        if isinstance(value, str):
            width, sep, height = value.lower().partition("x")
            if not sep:
                raise ValueError("low_resolution must look like 640x480")
            value = (int(width), int(height))
        if min(value) <= 0:
            raise ValueError("low_resolution must be positive")
        return tuple(value)

    @property
    def edge_spec(self) -> EdgeSourceSpec:
        return parse_edge_source(self.edge_source)


def _normalise_key(key: str) -> str:
    key = key.strip().lower()
    prefix = ENV_PREFIX.lower()
    return key[len(prefix):] if key.startswith(prefix) else key


def load_config(config_file: Optional[Union[str, Path]] = None,
                overrides: Optional[Dict[str, object]] = None) -> PipelineConfig:
    """
    Build a PipelineConfig from defaults, environment, an optional config file and overrides.

    Args:
        config_file: Path to a ``KEY=value`` file; keys carry the PLANEREFINE_ prefix.
        overrides: Field names (prefix optional) mapped to values; these win over every other source.

    Returns:
        The validated configuration.
    """
    if config_file is not None and not Path(config_file).is_file():
        raise FileNotFoundError(f"Config file not found: {config_file}")

    refine_fields = set(RefineConfig.model_fields)
    pipeline_fields = set(PipelineConfig.model_fields) - {"refine"}
    refine_over: Dict[str, object] = {}
    pipeline_over: Dict[str, object] = {}
    for key, value in (overrides or {}).items():
        name = _normalise_key(key)
        if name in refine_fields:
            refine_over[name] = value
        elif name in pipeline_fields:
            pipeline_over[name] = value
        else:
            raise ValueError(f"Unknown configuration key '{key}'")

    refine = RefineConfig(_env_file=config_file, **refine_over)
    return PipelineConfig(_env_file=config_file, refine=refine, **pipeline_over)
