"""FastAPI application exposing analysis, design, sweep and verification.

Domain errors surface as HTTP 400 with the exception class name in the
body; structural/validation errors are FastAPI's usual 422. A degenerate
spectrum is still a successful analysis (the report says so), but any
endpoint that needs a utility direction turns it into a 400.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import DegenerateSpectrum, EpsilonOutOfRange, LipgeoError
from ..geometry import build_geometry
from ..mechanisms import (
    ConstraintFamily,
    audit_mechanism,
    build_mechanism,
    scaling_factors,
    utility_bounds,
)
from ..oracle import bounds_report, thread_cap
from .schemas import (
    AnalyzeRequest,
    AuditReport,
    BoundsSummary,
    DesignRequest,
    DesignResponse,
    ErrorBody,
    GeometryReport,
    MechanismDocument,
    SweepRequest,
    SweepResponse,
    SweepRow,
    VerifyRequest,
)

__all__ = ["create_app", "app"]


def create_app() -> FastAPI:
    app = FastAPI(title="lipgeo", version=__version__)

    @app.exception_handler(LipgeoError)
    async def _domain_error(request: Request, exc: LipgeoError) -> JSONResponse:
        body = ErrorBody(error=type(exc).__name__, detail=str(exc))
        return JSONResponse(status_code=400, content=body.model_dump())

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError) -> JSONResponse:
        body = ErrorBody(error="ValueError", detail=str(exc))
        return JSONResponse(status_code=400, content=body.model_dump())

    @app.get("/healthz")
    async def healthz() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/analyze", response_model=GeometryReport, response_model_exclude_none=True)
    async def analyze(request: AnalyzeRequest) -> GeometryReport:
        inst = request.instance.to_instance()
        try:
            ctx = build_geometry(inst)
        except DegenerateSpectrum as exc:
            sing = np.asarray(exc.singular_values, dtype=float)
            return GeometryReport(
                k=inst.k,
                w=np.asarray(exc.w, dtype=float).tolist(),
                sigma_max=float(sing[0]),
                sigma_min=float(sing[-1]),
                singular_values=sing.tolist(),
                sqrt_px=np.asarray(exc.sqrt_px, dtype=float).tolist(),
                c1=exc.c1,
                c2=exc.c2,
                c1_prime=exc.c1_prime,
                c2_prime=exc.c2_prime,
                degenerate=True,
                detail=str(exc),
            )
        return GeometryReport(
            k=inst.k,
            w=ctx.w.tolist(),
            sigma_max=ctx.sigma_max,
            sigma_min=float(ctx.singular_values[-1]),
            singular_values=ctx.singular_values.tolist(),
            l_star=ctx.l_star.tolist(),
            sqrt_px=ctx.sqrt_px.tolist(),
            c1=ctx.c1,
            c2=ctx.c2,
            c1_prime=ctx.c1_prime,
            c2_prime=ctx.c2_prime,
        )

    @app.post("/design", response_model=DesignResponse)
    async def design(request: DesignRequest) -> DesignResponse:
        inst = request.instance.to_instance()
        epsilon = request.epsilon if request.epsilon is not None else inst.epsilon
        if epsilon is None:
            raise HTTPException(
                status_code=422,
                detail="no epsilon: set it on the instance or in the request",
            )
        ctx = build_geometry(inst)
        family = ConstraintFamily(request.family)
        factors = scaling_factors(ctx, family, epsilon)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EpsilonOutOfRange)
            mech = build_mechanism(inst, ctx, factors, epsilon)
        bounds = utility_bounds(ctx, factors, epsilon, inst.k)
        audit = audit_mechanism(inst, mech)
        return DesignResponse(
            mechanism=MechanismDocument.from_mechanism(
                mech, factors.plus_factor, factors.minus_factor, factors.symmetric_factor
            ),
            bounds=BoundsSummary.from_bounds(bounds),
            audit=AuditReport.from_audit(mech, audit),
        )

    @app.post("/sweep", response_model=SweepResponse)
    async def sweep(request: SweepRequest) -> SweepResponse:
        inst = request.instance.to_instance()
        ctx = build_geometry(inst)
        grid = np.linspace(request.epsilon_start, request.epsilon_end, request.steps)

        def row(eps: float) -> SweepRow:
            report = bounds_report(
                inst,
                ctx,
                float(eps),
                include_oracle=request.include_oracle,
                oracle_resolution=request.oracle_resolution,
                oracle_u_cardinality=request.oracle_u_cardinality,
            )
            return SweepRow.from_report(report)

        if request.include_oracle:
            # the oracle threads internally; keep rows sequential
            rows = [row(eps) for eps in grid]
        else:
            with ThreadPoolExecutor(max_workers=thread_cap()) as pool:
                rows = list(pool.map(row, grid))
        return SweepResponse(rows=rows)

    @app.post("/verify", response_model=AuditReport)
    async def verify(request: VerifyRequest) -> AuditReport:
        inst = request.instance.to_instance()
        mech = request.mechanism.to_mechanism(inst)
        audit = audit_mechanism(inst, mech)
        return AuditReport.from_audit(mech, audit)

    return app


app = create_app()
