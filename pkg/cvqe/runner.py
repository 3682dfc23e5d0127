import asyncio
from pathlib import Path

from loguru import logger

from cvqe.config import scan_config_from_dict
from cvqe.database import db
from cvqe.scan import run_scan


class ScanRunner:
    """Runs queued scans and keeps the ledger row in step with the job."""

    async def run_job(self, job_id: int, threads: int = 1):
        """
        Execute one scan in a background task: pending -> running ->
        completed (rows and best E_B recorded) or failed (message recorded).
        """
        job = await db.get_job(job_id)
        if not job:
            logger.error(f"Job {job_id} not found")
            return

        try:
            await db.mark_running(job_id)

            config = scan_config_from_dict(job.config, source=f"job {job_id}")
            output_path = Path(job.output_path)
            output_path.mkdir(parents=True, exist_ok=True)

            logger.info(
                f"Job {job_id}: scan {job.config_hash} Q={config.model.Q} Ne={config.model.Ne} "
                f"V={config.model.V}, {len(config.schedule.points())} points, seeds {config.sampling.seeds} -> {output_path}"
            )

            # numerics block; keep the event loop free
            outcome = await asyncio.to_thread(run_scan, config, output_path, threads)

            await db.mark_completed(job_id, rows_written=len(outcome.rows), best_energy=outcome.best_energy)
            logger.success(f"Job {job_id}: {len(outcome.rows)} rows, best E_B={outcome.best_energy}")

        except Exception as e:
            logger.error(f"Job {job_id}: scan failed - {e}")
            await db.mark_failed(job_id, str(e))


runner = ScanRunner()
