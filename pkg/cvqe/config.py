import hashlib
import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from cvqe.errors import ConfigError
from cvqe.fermion import ChainModel
from cvqe.subspace import Selection


class Settings(BaseSettings):
    """Process settings loaded from environment variables (prefix CVQE_)."""

    # Service
    api_host: str = "0.0.0.0"
    api_port: int = 8000

    # Job ledger
    database_url: str = "sqlite+aiosqlite:///./cvqe_runs.db"

    # Output
    default_output_path: str = "./runs"

    # Logging
    log_level: str = "INFO"
    log_file: Optional[str] = None

    # Worker pool size used when a command does not pass --threads
    default_threads: int = 1

    model_config = SettingsConfigDict(
        env_prefix="CVQE_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False
    )


settings = Settings()


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(_Section):
    """Spinless chain parameters, energies in units of t."""
    Q: int = Field(..., ge=1)
    Ne: int = Field(..., ge=0)
    dmu: float = 0.75
    t: float = Field(1.0, gt=0, description="Hopping; sets the energy unit and tau0 = 1/t")
    V: float = 1.0

    @model_validator(mode="after")
    def _check_filling(self) -> "ModelSection":
        if self.Ne > self.Q:
            raise ValueError(f"Ne={self.Ne} exceeds Q={self.Q}")
        return self

    def chain(self) -> ChainModel:
        return ChainModel(self.Q, self.Ne, self.dmu, self.t, self.V)


class ScheduleSection(_Section):
    ntau_list: List[int] = Field(..., min_length=1)
    dtau_list: List[float] = Field(..., min_length=1, description="Step durations in units of tau0 = 1/t")

    @field_validator("ntau_list")
    @classmethod
    def _non_negative_steps(cls, value: List[int]) -> List[int]:
        if any(n < 0 for n in value):
            raise ValueError("ntau values must be >= 0")
        return value

    @field_validator("dtau_list")
    @classmethod
    def _non_negative_dt(cls, value: List[float]) -> List[float]:
        if any(dt < 0 for dt in value):
            raise ValueError("dtau values must be >= 0")
        return value

    def points(self) -> List[Tuple[int, float]]:
        """Grid points in ntau-major order."""
        return [(ntau, dtau) for ntau in self.ntau_list for dtau in self.dtau_list]


class SamplingSection(_Section):
    shots: Optional[int] = Field(4096, ge=1, description="\"exact\" (or null) uses the exact distribution")
    seeds: List[NonNegativeInt] = Field(default_factory=lambda: [0], min_length=1)
    selection: List[str] = Field(default_factory=lambda: ["all"], min_length=1)
    postselect: bool = True

    @field_validator("shots", mode="before")
    @classmethod
    def _exact_keyword(cls, value):
        # TOML has no null
        if isinstance(value, str) and value.strip().lower() == "exact":
            return None
        return value

    @field_validator("selection")
    @classmethod
    def _parse_rules(cls, value: List[str]) -> List[str]:
        for rule in value:
            Selection.parse(rule)
        return value

    def rules(self) -> List[Selection]:
        return [Selection.parse(rule) for rule in self.selection]


class SolverSection(_Section):
    expansion_depth: int = Field(1, ge=1)
    tol_rel: float = Field(1e-6, gt=0)
    patience: int = Field(3, ge=1)
    dense_cutoff: int = Field(200, ge=1)
    eig_tol: float = Field(1e-10, gt=0)


class OutputSection(_Section):
    directory: str = "runs"
    csv_name: str = "scan.csv"
    summary_name: str = "summary.csv"
    records_name: str = "records.json"


class UnitsSection(_Section):
    t_hartree: Optional[float] = Field(None, gt=0, description="Value of t in Hartree, used for dE_Ha columns")


class MethodsSection(_Section):
    budget: int = Field(16384, ge=1)
    epsilon: float = Field(1e-6, ge=0)
    epsilon_mode: Literal["frequency", "amplitude"] = "frequency"


class ScanConfig(_Section):
    """Validated scan configuration (schema version 1)."""
    schema_version: Literal[1] = 1
    model: ModelSection
    schedule: ScheduleSection
    sampling: SamplingSection = Field(default_factory=SamplingSection)
    solver: SolverSection = Field(default_factory=SolverSection)
    output: OutputSection = Field(default_factory=OutputSection)
    units: UnitsSection = Field(default_factory=UnitsSection)
    methods: MethodsSection = Field(default_factory=MethodsSection)

    def config_hash(self) -> str:
        """Short SHA-256 over the canonical JSON of the physics-relevant sections."""
        payload = self.model_dump(mode="json", exclude={"output"})
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def _format_validation_error(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(p) for p in item["loc"]) or "<root>"
        parts.append(f"field '{location}': {item['msg']}")
    return "; ".join(parts)


def scan_config_from_dict(data: dict, source: str = "<config>") -> ScanConfig:
    try:
        return ScanConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"{source}: {_format_validation_error(e)}") from e


def load_scan_config(path: str | Path) -> ScanConfig:
    """Read and validate a TOML scan configuration."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config ({e})") from e
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        # message carries "(at line N, column M)"
        raise ConfigError(f"{path}: {e}") from e
    return scan_config_from_dict(data, source=str(path))
