"""Pydantic schemas for the pipeline configuration file

Every section forbids unknown keys so a typo in the YAML is a hard error.
"""
import math
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid')


class RenderConfig(_Section):
    """Monte Carlo path tracing settings"""
    spp: int = Field(default=128, ge=1, description="samples per pixel, forward pass")
    spp_backward: int = Field(default=4, ge=1, description="samples per pixel, backward pass")
    max_bounces: int = Field(default=3, ge=1, description="path vertices on the surface (d)")
    seed: int = Field(default=0, ge=0)
    diffuse_only: bool = Field(default=False, description="drop the specular lobe (debug)")
    width: int = Field(default=1280, ge=1)
    height: int = Field(default=704, ge=1)
    technique: Literal['mis', 'light', 'bsdf'] = Field(
        default='mis',
        description="mis combines both; light/bsdf keep a single technique for direct lighting",
    )
    workers: int = Field(default=1, ge=1, description="tile worker threads")
    tile_size: int = Field(default=32, ge=1)
    ray_batch: int = Field(default=1 << 16, ge=1024, description="max paths traced per chunk")


class FieldConfig(_Section):
    """hash grid + MLP material field"""
    levels: int = Field(default=12, ge=1)
    table_size_log2: int = Field(default=19, ge=4, le=24)
    features: int = Field(default=2, ge=1)
    n_min: int = Field(default=16, ge=1)
    n_max: int = Field(default=2048, ge=1)
    hidden_layers: int = Field(default=2, ge=1)
    hidden_width: int = Field(default=32, ge=1)
    leaky_slope: float = Field(default=0.01, ge=0.0, lt=1.0)
    table_init: float = Field(default=1e-4, ge=0.0, description="tables init uniform in [-x, x]")
    seed: int = Field(default=0, ge=0)

    @model_validator(mode='after')
    def check_resolutions(self):
        if self.n_max < self.n_min:
            raise ValueError(f"n_max ({self.n_max}) must be >= n_min ({self.n_min})")
        return self

    @property
    def table_size(self) -> int:
        return 1 << self.table_size_log2


class OptimSettings(_Section):
    """multi-view optimization schedule"""
    iterations: int = Field(default=1000, ge=0)
    batch_size: int = Field(default=8, ge=1)
    lr_tables: float = Field(default=1e-2, gt=0.0)
    lr_mlp: float = Field(default=1e-3, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)
    reg_weight: float = Field(default=0.2, ge=0.0, description="lambda, shared by all three guide terms")
    guide_color_space: Literal['srgb', 'linear'] = Field(
        default='srgb', description="space the base color guide is compared in",
    )
    checkpoint_every: int = Field(default=0, ge=0, description="0 disables periodic checkpoints")
    seed: int = Field(default=0, ge=0, description="batch sampling seed")
    render: RenderConfig = Field(default_factory=RenderConfig)


class SceneConfig(_Section):
    mesh: Path
    probe: Path
    normalize: bool = True
    probe_rotation: float = Field(default=0.0, description="radians around +Y")
    probe_interpolation: Literal['bilinear', 'nearest'] = 'bilinear'


class OrbitConfig(_Section):
    n_frames: int = Field(default=121, ge=1)
    elevation: float = Field(default=0.3, gt=-math.pi / 2, lt=math.pi / 2)
    radius: float = Field(default=2.0, gt=0.0)
    fov: float = Field(gt=0.0, lt=math.pi, description="vertical field of view, radians")


class MaterialConfig(_Section):
    """material used by render/guides/relight"""
    kind: Literal['constant', 'oracle', 'checkpoint', 'textures'] = 'constant'
    base_color: List[float] = Field(default=[0.7, 0.7, 0.7], min_length=3, max_length=3)
    roughness: float = Field(default=0.5, ge=0.0, le=1.0)
    metallic: float = Field(default=0.0, ge=0.0, le=1.0)
    path: Optional[Path] = Field(default=None, description="checkpoint file or texture directory")

    @model_validator(mode='after')
    def check_path(self):
        if self.kind in ('checkpoint', 'textures') and self.path is None:
            raise ValueError(f"material.kind={self.kind} needs material.path")
        return self


class BakeConfig(_Section):
    resolution: int = Field(default=1024, ge=16)
    dilation_iterations: Optional[int] = Field(
        default=None, ge=0, description="None dilates until every texel is filled"
    )
    sixteen_bit: bool = Field(default=False, description="also write 16-bit linear maps")


class RelightConfig(_Section):
    probes: List[Path] = Field(default_factory=list)
    truth_dir: Optional[Path] = None


class WarpConfig(_Section):
    source_frame: int = Field(default=0, ge=0)
    source_image: Optional[Path] = None


class PathsConfig(_Section):
    frameset: Optional[Path] = None
    output: Path = Path('output')
    checkpoint: Optional[Path] = None
    truth_textures: Optional[Path] = None


class PipelineConfig(_Section):
    """the whole configuration file"""
    scene: SceneConfig
    orbit: OrbitConfig
    render: RenderConfig = Field(default_factory=RenderConfig)
    field: FieldConfig = Field(default_factory=FieldConfig)
    optim: OptimSettings = Field(default_factory=OptimSettings)
    material: MaterialConfig = Field(default_factory=MaterialConfig)
    bake: BakeConfig = Field(default_factory=BakeConfig)
    relight: RelightConfig = Field(default_factory=RelightConfig)
    warp: WarpConfig = Field(default_factory=WarpConfig)
    paths: PathsConfig = Field(default_factory=PathsConfig)

    @model_validator(mode='after')
    def share_render_settings(self):
        #optimization renders with the top-level render section
        if 'render' not in self.optim.model_fields_set:
            self.optim.render = self.render
        return self


class RuntimeSettings(BaseSettings):
    """environment overrides (PBR_WORKERS, PBR_QUIET, PBR_OUTPUT)"""
    model_config = SettingsConfigDict(env_prefix='PBR_', extra='ignore')

    workers: Optional[int] = Field(default=None, ge=1)
    quiet: bool = False
    output: Optional[Path] = None
