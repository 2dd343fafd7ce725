"""The HTTP service wrapping the core package.

Endpoints are synchronous: a training request blocks until the run
finishes, which is the right trade for desk-scale experiments driven by
scripts and CI. All deliberate errors surface as 400s with the underlying
message; schema violations are FastAPI's usual 422.
"""

from __future__ import annotations

import base64
from dataclasses import asdict

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..checkpoint import bundle_from_bytes, bundle_to_bytes
from ..config import PRESETS, config_digest, config_to_dict
from ..errors import MixAdaptError
from ..eval import (
    curve_to_csv,
    export_embeddings,
    generate_from_config,
    run_adaptation,
    run_shots_curve,
    run_source,
)
from ..data import dataset_to_csv
from . import schemas


def _decode_checkpoint(b64: str):
    try:
        raw = base64.b64decode(b64.encode(), validate=True)
    except Exception as exc:
        raise MixAdaptError(f"checkpoint payload is not valid base64: {exc}") from None
    return bundle_from_bytes(raw)


def _encode_checkpoint(bundle, digest: str) -> str:
    return base64.b64encode(bundle_to_bytes(bundle, digest)).decode()


def create_app() -> FastAPI:
    app = FastAPI(title="mixadapt", version=__version__,
                  description="Domain adaptation into a shared Gaussian-mixture "
                              "embedding, served over HTTP.")

    @app.exception_handler(MixAdaptError)
    async def _domain_error(_: Request, exc: MixAdaptError) -> JSONResponse:
        return JSONResponse(status_code=400, content={
            "detail": str(exc), "error_type": type(exc).__name__})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.get("/presets")
    def presets():
        return {"presets": sorted(PRESETS)}

    @app.post("/datasets/generate", response_model=schemas.GenerateDataResponse)
    def generate(req: schemas.GenerateDataRequest):
        config = req.config.build()
        source, target = generate_from_config(config)
        manifest = {
            "preset": req.config.preset, "dataset": config.dataset,
            "seed": config.seed, "class_count": config.class_count,
            "feature_dim": source.features.shape[1],
            "n_source": len(source), "n_target": len(target),
            "config": config_to_dict(config), "config_digest": config_digest(config),
        }
        return schemas.GenerateDataResponse(source_csv=dataset_to_csv(source),
                                            target_csv=dataset_to_csv(target),
                                            manifest=manifest)

    @app.post("/train/source", response_model=schemas.TrainSourceResponse)
    def train_source_endpoint(req: schemas.TrainSourceRequest):
        config = req.config.build()
        source = req.source.build()
        bundle, report = run_source(config, source)
        digest = config_digest(config)
        return schemas.TrainSourceResponse(
            report=asdict(report), checkpoint_b64=_encode_checkpoint(bundle, digest),
            config_digest=digest)

    @app.post("/adapt", response_model=schemas.AdaptResponse)
    def adapt_endpoint(req: schemas.AdaptRequest):
        config = req.config.build()
        bundle, _, _ = _decode_checkpoint(req.checkpoint_b64)
        source = req.source.build()
        target = req.target.build()
        shots = req.shots if req.shots is not None else config.shots
        run_seed = req.run_seed if req.run_seed is not None else config.seed
        adapted, report = run_adaptation(config, bundle, source, target, shots, run_seed)
        return schemas.AdaptResponse(
            report=asdict(report),
            checkpoint_b64=_encode_checkpoint(adapted, config_digest(config)),
            final_accuracy=report.final_accuracy,
            baseline_accuracy=report.baseline_accuracy)

    @app.post("/shots-curve", response_model=schemas.ShotsCurveResponse)
    def shots_curve_endpoint(req: schemas.ShotsCurveRequest):
        config = req.config.build()
        source = req.source.build()
        target = req.target.build()
        result = run_shots_curve(config, source, target, req.shots_grid, req.n_seeds)
        return schemas.ShotsCurveResponse(
            csv=curve_to_csv(result),
            rows=[schemas.CurveRowModel(shots=r.shots, mean_accuracy=r.mean_accuracy,
                                        std_accuracy=r.std_accuracy,
                                        best_accuracy=r.best_accuracy)
                  for r in result.rows],
            baseline_accuracy=result.baseline_accuracy,
            source_report=asdict(result.source_report) if result.source_report else None)

    @app.post("/embeddings/export", response_model=schemas.ExportEmbeddingsResponse)
    def export_endpoint(req: schemas.ExportEmbeddingsRequest):
        bundle, _, _ = _decode_checkpoint(req.checkpoint_b64)
        dataset = req.dataset.build()
        return schemas.ExportEmbeddingsResponse(
            csv=export_embeddings(bundle, dataset, req.encoder))

    return app


app = create_app()
