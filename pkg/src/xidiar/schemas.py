"""Request and response models for the HTTP service."""
from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field, model_validator


class TurnModel(BaseModel):
    onset: float = Field(ge=0)
    duration: float = Field(gt=0)
    label: str = "speech"


class Health(BaseModel):
    status: str
    version: str


class ProfileModel(BaseModel):
    name: str
    clustering: Literal["NONE", "AHC", "KMEDOIDS"]
    k_min: int | None = None
    k_max: int | None = None
    k: int | None = None
    ahc_threshold: float | None = None
    pca_dim: int | None = None
    engine: Literal["SD", "KALDI"] = "SD"
    change_threshold: float = 0.5


class ScoreRequest(BaseModel):
    uri: str = "file"
    reference: list[TurnModel]
    hypothesis: list[TurnModel]
    uem: list[tuple[float, float]] | None = None


class ScoreResponse(BaseModel):
    uri: str
    der: float
    miss: float
    falarm: float
    spkerr: float
    jer: float
    total: float
    mapping: dict[str, str]


class ChangeTrackModel(BaseModel):
    scores: list[float]
    step: float = Field(gt=0)
    offset: float = 0.0


class SegmentRequest(BaseModel):
    uri: str = "file"
    sad: list[tuple[float, float]]
    change_scores: ChangeTrackModel | None = None
    threshold: float = Field(0.5, ge=0, le=1)
    min_duration: float = Field(0.5, gt=0)
    geometry: tuple[float, float, float] | None = None
    kaldi: bool = False


class SegmentModel(BaseModel):
    onset: float
    duration: float
    parent: int


class SegmentResponse(BaseModel):
    uri: str
    segments: list[SegmentModel]
    short_leftovers: list[tuple[float, float]]


class ClusterRequest(BaseModel):
    embeddings: list[list[float]] = Field(min_length=1)
    method: Literal["ahc", "kmedoids"] = "ahc"
    threshold: float | None = None
    k_min: int = Field(1, ge=1)
    k_max: int | None = None
    k: int | None = Field(None, ge=1)

    @model_validator(mode="after")
    def _method_params(self):
        if self.method == "ahc" and self.threshold is None:
            raise ValueError("ahc needs a threshold")
        if self.method == "kmedoids" and self.k is None:
            raise ValueError("kmedoids needs k")
        return self


class MergeModel(BaseModel):
    first: int
    second: int
    distance: float
    size: int


class ClusterResponse(BaseModel):
    labels: list[int]
    k: int
    merges: list[MergeModel] = []
    medoids: list[int] | None = None
    cost: float | None = None


class LayerModel(BaseModel):
    activation: Literal["tanh", "sigmoid", "softmax", "identity"]
    weight: list[list[float]]
    bias: list[float]


class MlpModelSchema(BaseModel):
    layers: list[LayerModel] = Field(min_length=1)
    metadata: dict = {}


class DomainRequest(BaseModel):
    stage1: MlpModelSchema
    stage2: MlpModelSchema
    vector: list[float]
    threshold: float = Field(0.6, ge=0, le=1)


class DomainResponse(BaseModel):
    label: str
    stage1_prob: float
    stage2_posteriors: dict[str, float] | None
    profile: ProfileModel


class CoveragePurityRequest(BaseModel):
    reference: list[TurnModel]
    segments: list[tuple[float, float]]


class CoveragePurityResponse(BaseModel):
    coverage: float
    purity: float
