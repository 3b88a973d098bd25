"""HTTP front end over the core package.

Run with ``xidiar serve`` or ``uvicorn xidiar.service:app``.
"""
from __future__ import annotations

import warnings
from importlib.metadata import PackageNotFoundError, version

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from . import schemas
from .annotation import TimedLabeling, Turn
from .clustering import ahc, cosine_distance_matrix, k_medoids
from .domain import MlpModel, classify_domain, default_registry, profile_for
from .errors import ConfigError, DiarizationError
from .scoring import coverage_purity, der
from .segmentation import KALDI_GEOMETRY, SD_GEOMETRY, ChangeScoreTrack, kaldi_segments, segment_conversation

try:
    __version__ = version("artifact")
except PackageNotFoundError:
    __version__ = "0.0.0"

app = FastAPI(title="xidiar", version=__version__)
registry = default_registry()


@app.exception_handler(DiarizationError)
async def _diarization_error(request: Request, exc: DiarizationError):
    return JSONResponse(status_code=422, content={"detail": str(exc), "stage": exc.stage})


def _labeling(uri: str, turns: list[schemas.TurnModel]) -> TimedLabeling:
    return TimedLabeling(uri, [Turn(t.onset, t.duration, t.label) for t in turns])


@app.get("/health", response_model=schemas.Health)
def health():
    return schemas.Health(status="ok", version=__version__)


@app.get("/profiles", response_model=list[schemas.ProfileModel])
def list_profiles():
    return [p.to_dict() for p in registry]


@app.get("/profiles/{name}", response_model=schemas.ProfileModel)
def get_profile(name: str):
    try:
        return profile_for(name, registry).to_dict()
    except ConfigError as exc:
        raise HTTPException(status_code=404, detail=str(exc)) from exc


@app.post("/score", response_model=schemas.ScoreResponse)
def score(req: schemas.ScoreRequest):
    f = der(_labeling(req.uri, req.reference), _labeling(req.uri, req.hypothesis), req.uem)
    return schemas.ScoreResponse(
        uri=f.uri, der=f.der, miss=f.miss, falarm=f.falarm, spkerr=f.spkerr, jer=f.jer, total=f.total, mapping=f.mapping
    )


@app.post("/segment", response_model=schemas.SegmentResponse)
def segment(req: schemas.SegmentRequest):
    sad = TimedLabeling.from_intervals(req.uri, req.sad)
    if req.kaldi:
        segs = kaldi_segments(sad, req.geometry or KALDI_GEOMETRY)
    else:
        track = None
        if req.change_scores is not None:
            track = ChangeScoreTrack(np.array(req.change_scores.scores), req.change_scores.step, req.change_scores.offset)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            segs = segment_conversation(sad, track, req.threshold, req.min_duration, req.geometry or SD_GEOMETRY)
    return schemas.SegmentResponse(
        uri=segs.uri,
        segments=[schemas.SegmentModel(onset=s.onset, duration=s.duration, parent=s.parent) for s in segs.segments],
        short_leftovers=segs.short_leftovers,
    )


@app.post("/cluster", response_model=schemas.ClusterResponse)
def cluster(req: schemas.ClusterRequest):
    x = np.array(req.embeddings, dtype=np.float64)
    if x.ndim != 2:
        raise HTTPException(status_code=422, detail="embeddings must be a rectangular matrix")
    dist = cosine_distance_matrix(x)
    if req.method == "ahc":
        a = ahc(dist, req.threshold, req.k_min, req.k_max)
    else:
        a = k_medoids(dist, req.k)
    return schemas.ClusterResponse(
        labels=[int(l) for l in a.labels],
        k=a.k,
        merges=[schemas.MergeModel(first=m.first, second=m.second, distance=m.distance, size=m.size) for m in a.linkage_trace],
        medoids=None if a.medoids is None else [int(m) for m in a.medoids],
        cost=a.cost,
    )


@app.post("/classify-domain", response_model=schemas.DomainResponse)
def classify(req: schemas.DomainRequest):
    s1 = MlpModel.from_dict(req.stage1.model_dump())
    s2 = MlpModel.from_dict(req.stage2.model_dump())
    d = classify_domain(s1, s2, np.array(req.vector), req.threshold)
    return schemas.DomainResponse(
        label=d.label,
        stage1_prob=d.stage1_prob,
        stage2_posteriors=d.stage2_posteriors,
        profile=profile_for(d.label, registry).to_dict(),
    )


@app.post("/coverage-purity", response_model=schemas.CoveragePurityResponse)
def cov_pur(req: schemas.CoveragePurityRequest):
    ref = _labeling("file", req.reference)
    segs = [(s, e - s) for s, e in req.segments if e > s]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        c, p = coverage_purity(ref, segs)
    return schemas.CoveragePurityResponse(coverage=c, purity=p)
