"""FastAPI app exposing the analysis pipeline.

One POST endpoint per subcommand; the server and its clients share a
filesystem (single-host analysis daemon), so requests reference manifests
and output directories by path. Loaded experiments are cached between
requests, which is the point of running this as a service: load a large
ensemble once, then query scores, partitions, and predictions cheaply.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import ClensError
from . import schemas


def create_app() -> FastAPI:
    from .. import pipeline

    app = FastAPI(title="clens", version=__version__)

    @app.exception_handler(ClensError)
    async def clens_error_handler(_request: Request, exc: ClensError):
        body = schemas.ErrorBody(category=exc.category, code=exc.code, message=exc.message)
        return JSONResponse(status_code=400, content={"detail": body.model_dump()})

    @app.get("/v1/health")
    def health():
        return {"service": "clens", "version": __version__}

    @app.post("/v1/gen", response_model=schemas.GenResponse)
    def gen(req: schemas.GenRequest):
        return pipeline.run_gen(req)

    @app.post("/v1/train", response_model=schemas.TrainResponse)
    def train(req: schemas.TrainRequest):
        return pipeline.run_train(req)

    @app.post("/v1/score", response_model=schemas.ScoreResponse)
    def score(req: schemas.ScoreRequest):
        return pipeline.run_score(req)

    @app.post("/v1/partition", response_model=schemas.PartitionResponse)
    def partition(req: schemas.PartitionRequest):
        return pipeline.run_partition(req)

    @app.post("/v1/predict", response_model=schemas.PredictResponse)
    def predict(req: schemas.PredictRequest):
        return pipeline.run_predict(req)

    @app.post("/v1/phases", response_model=schemas.PhasesResponse)
    def phases(req: schemas.PhasesRequest):
        return pipeline.run_phases(req)

    @app.post("/v1/fit", response_model=schemas.FitResponse)
    def fit(req: schemas.FitRequest):
        return pipeline.run_fit(req)

    @app.post("/v1/extremes", response_model=schemas.ExtremesResponse)
    def extremes(req: schemas.ExtremesRequest):
        return pipeline.run_extremes(req)

    @app.post("/v1/report", response_model=schemas.ReportResponse)
    def report(req: schemas.ReportRequest):
        return pipeline.run_report(req)

    return app
