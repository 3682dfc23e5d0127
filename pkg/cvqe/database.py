from contextlib import asynccontextmanager
from datetime import datetime
from typing import List, Optional

from sqlalchemy import JSON, DateTime, Float, Integer, String, Text, select
from sqlalchemy.ext.asyncio import AsyncSession, async_sessionmaker, create_async_engine
from sqlalchemy.orm import DeclarativeBase, Mapped, mapped_column

from cvqe.config import settings
from cvqe.models import JobStatus

TERMINAL_STATES = (JobStatus.COMPLETED, JobStatus.FAILED, JobStatus.CANCELLED)


class Base(DeclarativeBase):
    pass


class ScanJob(Base):
    """Ledger row for one scan submitted to the service."""
    __tablename__ = "scan_jobs"

    id: Mapped[int] = mapped_column(primary_key=True, autoincrement=True)
    status: Mapped[str] = mapped_column(String(20), default=JobStatus.PENDING.value)
    config: Mapped[dict] = mapped_column(JSON)
    config_hash: Mapped[str] = mapped_column(String(16), index=True)
    output_path: Mapped[str] = mapped_column(String(500))
    created_by: Mapped[str] = mapped_column(String(100))
    created_at: Mapped[datetime] = mapped_column(DateTime, default=datetime.utcnow)
    started_at: Mapped[Optional[datetime]] = mapped_column(DateTime, nullable=True)
    completed_at: Mapped[Optional[datetime]] = mapped_column(DateTime, nullable=True)
    error_message: Mapped[Optional[str]] = mapped_column(Text, nullable=True)
    # filled in when the scan finishes
    rows_written: Mapped[Optional[int]] = mapped_column(Integer, nullable=True)
    best_energy: Mapped[Optional[float]] = mapped_column(Float, nullable=True)

    @property
    def finished(self) -> bool:
        return JobStatus(self.status) in TERMINAL_STATES


class Database:
    """Async scan ledger: one row per submitted scan, keyed by job id and config hash."""

    def __init__(self, url: Optional[str] = None):
        self.engine = create_async_engine(url or settings.database_url, echo=False, future=True)
        self.async_session = async_sessionmaker(self.engine, class_=AsyncSession, expire_on_commit=False)

    async def init_db(self):
        """Create the ledger table if missing."""
        async with self.engine.begin() as conn:
            await conn.run_sync(Base.metadata.create_all)

    @asynccontextmanager
    async def get_session(self):
        async with self.async_session() as session:
            try:
                yield session
                await session.commit()
            except Exception:
                await session.rollback()
                raise

    async def create_job(self, config: dict, config_hash: str, output_path: str, created_by: str) -> ScanJob:
        async with self.get_session() as session:
            job = ScanJob(
                config=config,
                config_hash=config_hash,
                output_path=output_path,
                created_by=created_by,
            )
            session.add(job)
            await session.flush()
            await session.refresh(job)
            return job

    async def get_job(self, job_id: int) -> Optional[ScanJob]:
        async with self.get_session() as session:
            return await session.get(ScanJob, job_id)

    async def get_all_jobs(self, limit: int = 100, config_hash: Optional[str] = None) -> List[ScanJob]:
        """Most recent first, optionally only the scans of one config."""
        query = select(ScanJob)
        if config_hash:
            query = query.where(ScanJob.config_hash == config_hash)
        query = query.order_by(ScanJob.created_at.desc(), ScanJob.id.desc()).limit(limit)
        async with self.get_session() as session:
            result = await session.execute(query)
            return list(result.scalars().all())

    async def _transition(self, job_id: int, status: JobStatus, **fields) -> Optional[ScanJob]:
        async with self.get_session() as session:
            job = await session.get(ScanJob, job_id)
            if job is None:
                return None
            job.status = status.value
            now = datetime.utcnow()
            if status is JobStatus.RUNNING and job.started_at is None:
                job.started_at = now
            elif status in TERMINAL_STATES:
                job.completed_at = now
            for name, value in fields.items():
                setattr(job, name, value)
            return job

    async def mark_running(self, job_id: int) -> Optional[ScanJob]:
        return await self._transition(job_id, JobStatus.RUNNING)

    async def mark_completed(self, job_id: int, rows_written: int, best_energy: Optional[float]) -> Optional[ScanJob]:
        return await self._transition(job_id, JobStatus.COMPLETED, rows_written=rows_written, best_energy=best_energy)

    async def mark_failed(self, job_id: int, error_message: str) -> Optional[ScanJob]:
        return await self._transition(job_id, JobStatus.FAILED, error_message=error_message)

    async def close(self):
        await self.engine.dispose()


db = Database()
