from pydantic import BaseModel, ConfigDict, Field
from typing import List, Optional
from datetime import datetime
from enum import Enum

from cvqe.config import ModelSection, ScanConfig


class JobStatus(str, Enum):
    """Job status enumeration."""
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"
    CANCELLED = "cancelled"


class ScanRequest(BaseModel):
    """Request model for scan submission."""
    config: ScanConfig = Field(..., description="Validated scan configuration (same schema as the TOML files)")
    output_path: Optional[str] = Field(None, description="Custom output directory")
    threads: int = Field(1, ge=1, description="Worker threads for the grid")

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "config": {
                    "schema_version": 1,
                    "model": {"Q": 8, "Ne": 4, "dmu": 0.75, "t": 1.0, "V": 1.0},
                    "schedule": {"ntau_list": [25, 50, 100], "dtau_list": [0.0666666667]},
                    "sampling": {"shots": 16384, "seeds": [0, 1], "selection": ["top_k:2", "top_k:8", "top_k:14"]},
                    "units": {"t_hartree": 0.0666666667},
                },
                "output_path": "./runs/ntau_sweep_q8",
            }
        }
    )


class ScanJobResponse(BaseModel):
    """Response model for scan job information."""
    id: int
    status: JobStatus
    config: dict
    config_hash: str
    output_path: str
    created_at: datetime
    started_at: Optional[datetime] = None
    completed_at: Optional[datetime] = None
    error_message: Optional[str] = None
    rows_written: Optional[int] = None
    best_energy: Optional[float] = None
    created_by: str

    model_config = ConfigDict(from_attributes=True)


class ScanJobListResponse(BaseModel):
    """Response model for job list."""
    jobs: List[ScanJobResponse]
    total: int


class ScanSubmitResponse(BaseModel):
    """Response when a scan is submitted."""
    job_id: int
    config_hash: str
    message: str
    status: JobStatus


class OracleRequest(ModelSection):
    """Chain parameters for a reference-energy lookup."""
    t_hartree: Optional[float] = Field(None, gt=0, description="Value of t in Hartree")


class OracleResponse(BaseModel):
    Q: int
    Ne: int
    method: str = Field(..., description="free_fermion or ed")
    energy: float = Field(..., description="Ground energy in units of t")
    energy_hartree: Optional[float] = None
