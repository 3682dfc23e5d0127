from contextlib import asynccontextmanager
from pathlib import Path
from typing import Optional

from fastapi import BackgroundTasks, Depends, FastAPI, Header, HTTPException, Query
from loguru import logger

from cvqe import __version__
from cvqe.config import settings
from cvqe.database import ScanJob, db
from cvqe.errors import CapacityError, CVQEError
from cvqe.fermion import to_hartree
from cvqe.logs import setup_logging
from cvqe.models import (
    JobStatus,
    OracleRequest,
    OracleResponse,
    ScanJobListResponse,
    ScanJobResponse,
    ScanRequest,
    ScanSubmitResponse,
)
from cvqe.runner import runner
from cvqe.scan import oracle_energy

SERVICE_NAME = "CVQE Scan Service"

setup_logging(settings.log_level, settings.log_file)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Open the job ledger on startup, release it on shutdown."""
    logger.info(f"Starting {SERVICE_NAME} (ledger {settings.database_url})")
    await db.init_db()
    yield
    logger.info(f"Shutting down {SERVICE_NAME}")
    await db.close()


app = FastAPI(
    title=SERVICE_NAME,
    description="Queue (N_tau, dtau) scans of the diabatic subspace solver and look up exact reference energies",
    version=__version__,
    lifespan=lifespan
)


def verify_user(x_username: Optional[str] = Header(None)):
    """Every request names its user."""
    if not x_username:
        raise HTTPException(
            status_code=400,
            detail="Missing X-Username header. Please provide your username.")
    return x_username


async def _require_job(job_id: int) -> ScanJob:
    job = await db.get_job(job_id)
    if job is None:
        raise HTTPException(status_code=404, detail=f"Job {job_id} not found")
    return job


@app.get("/")
async def root():
    return {"service": SERVICE_NAME, "status": "running", "version": __version__}


@app.get("/health")
async def health_check():
    return {"status": "healthy", "database": "connected"}


@app.post("/scans", response_model=ScanSubmitResponse, status_code=202)
async def submit_scan(
    request: ScanRequest,
    background_tasks: BackgroundTasks,
    username: str = Depends(verify_user)
):
    """
    Queue a scan. The body's config is validated against the same schema as
    the TOML files; the scan runs in the background and writes to
    output_path (default: <default_output_path>/<config_hash>).
    """
    config_hash = request.config.config_hash()
    output_path = request.output_path or str(Path(settings.default_output_path) / config_hash)
    try:
        job = await db.create_job(
            config=request.config.model_dump(mode="json"),
            config_hash=config_hash,
            output_path=output_path,
            created_by=username
        )
    except Exception as e:
        logger.error(f"Could not record scan {config_hash}: {e}")
        raise HTTPException(status_code=500, detail=str(e))

    background_tasks.add_task(runner.run_job, job_id=job.id, threads=request.threads)
    logger.info(f"Job {job.id} submitted by {username} (config {config_hash}, {len(request.config.schedule.points())} points)")

    return ScanSubmitResponse(
        job_id=job.id,
        config_hash=config_hash,
        message=f"Scan job {job.id} queued.",
        status=JobStatus.PENDING
    )


@app.get("/scans", response_model=ScanJobListResponse)
async def list_scans(
    limit: int = Query(50, ge=1, le=1000),
    config_hash: Optional[str] = Query(None, description="Only scans of this config"),
    username: str = Depends(verify_user)
):
    """Scan jobs, most recent first."""
    jobs = await db.get_all_jobs(limit=limit, config_hash=config_hash)
    return ScanJobListResponse(jobs=[ScanJobResponse.model_validate(job) for job in jobs], total=len(jobs))


@app.get("/scans/{job_id}", response_model=ScanJobResponse)
async def get_scan(job_id: int, username: str = Depends(verify_user)):
    return ScanJobResponse.model_validate(await _require_job(job_id))


@app.get("/scans/{job_id}/status")
async def get_scan_status(job_id: int, username: str = Depends(verify_user)):
    """Compact progress view of one job."""
    job = await _require_job(job_id)
    return {
        "job_id": job.id,
        "status": job.status,
        "finished": job.finished,
        "config_hash": job.config_hash,
        "rows_written": job.rows_written,
        "best_energy": job.best_energy,
        "error_message": job.error_message
    }


@app.post("/oracle", response_model=OracleResponse)
async def oracle(request: OracleRequest, username: str = Depends(verify_user)):
    """Exact ground energy: free-fermion for V = 0, sector ED otherwise."""
    model = request.chain()
    try:
        energy = oracle_energy(model)
    except CapacityError as e:
        raise HTTPException(status_code=413, detail=str(e))
    except CVQEError as e:
        raise HTTPException(status_code=422, detail=str(e))
    return OracleResponse(
        Q=model.Q,
        Ne=model.Ne,
        method="free_fermion" if model.is_free() else "ed",
        energy=energy,
        energy_hartree=to_hartree(energy, request.t_hartree) if request.t_hartree else None
    )


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(
        "cvqe.main:app",
        host=settings.api_host,
        port=settings.api_port,
        reload=False
    )
