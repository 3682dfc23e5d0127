"""
Scan orchestration shared by the command line and the HTTP service:
(N_tau, dtau) grids, oracle comparisons, circuit export and the method
comparison, each writing machine-readable files.
"""

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd
from loguru import logger

from cvqe.circuit import Circuit, compile_evolution, emit_qasm, prepare_occupation
from cvqe.config import ScanConfig
from cvqe.errors import ConfigError
from cvqe.fermion import ChainModel, exact_ground_energy_ed, to_hartree
from cvqe.measurement import ComparisonReport, compare_methods
from cvqe.pauli import jordan_wigner
from cvqe.statevector import EvolutionSchedule, expectation
from cvqe.subspace import (
    ConvergeResult,
    PreparedModel,
    Selection,
    converge_loop,
    derive_seed,
    measure,
    postselect,
    solve_from_counts,
)

CSV_COLUMNS = [
    "ntau", "dtau_tau0", "seed", "selection", "shots",
    "E_guiding", "E_B", "B0_size", "B_size", "E_exact", "dE",
]
SUMMARY_KEYS = ["ntau", "dtau_tau0", "selection"]


@dataclass
class ScanOutcome:
    config_hash: str
    reference: Optional[float]
    rows: pd.DataFrame
    summary: pd.DataFrame
    records: List[dict] = field(default_factory=list)
    paths: Dict[str, Path] = field(default_factory=dict)

    @property
    def best_energy(self) -> Optional[float]:
        if self.rows.empty:
            return None
        return float(self.rows["E_B"].min())


def oracle_energy(model: ChainModel) -> float:
    """Free-fermion energy for V = 0, sector ED otherwise (CapacityError past the sector cap)."""
    if model.is_free():
        return model.free_energy()
    return exact_ground_energy_ed(model.hamiltonian(), model.Ne)


def _reference_or_none(model: ChainModel) -> Optional[float]:
    energy = model.reference_energy()
    if energy is None:
        logger.warning(f"no exact reference for Q={model.Q} Ne={model.Ne}: sector too large for ED")
    return energy


def _effective_rule(rule: Selection, shots: Optional[int]) -> Selection:
    if shots is None and rule.rule == "min_count":
        return Selection("all")
    return rule


def _evaluate_point(
    config: ScanConfig,
    prepared: PreparedModel,
    index: int,
    ntau: int,
    dtau: float,
    seeds: Sequence[int],
    rules: Sequence[Selection],
) -> List[dict]:
    """One grid point: the guiding state once, one sample per seed, every selection on the same counts."""
    start = time.perf_counter()
    guiding = prepared.guiding_state(EvolutionSchedule(ntau, dtau))
    guiding_energy = expectation(guiding, prepared.H)
    shots = config.sampling.shots
    solver = config.solver
    out = []
    for seed in seeds:
        counts = measure(guiding, shots, derive_seed(seed, index))
        if config.sampling.postselect:
            counts = postselect(counts, config.model.Ne)
        for rule in rules:
            solve = solve_from_counts(
                prepared.H,
                counts,
                _effective_rule(rule, shots),
                expansion_depth=solver.expansion_depth,
                dense_cutoff=solver.dense_cutoff,
                tol=solver.eig_tol,
            )
            out.append({
                "ntau": ntau,
                "dtau_tau0": dtau,
                "seed": seed,
                "selection": str(rule),
                "shots": shots,
                "E_guiding": guiding_energy,
                "E_B": solve.energy,
                "B0_size": solve.b0_size,
                "B_size": solve.b_size,
                "wall_time": solve.wall_time,
            })
    logger.info(f"point {index}: N_tau={ntau} dtau={dtau:g} E_guiding={guiding_energy:.10f} ({time.perf_counter() - start:.2f}s)")
    return out


def build_rows(records: List[dict], reference: Optional[float], config: ScanConfig, config_hash: str) -> pd.DataFrame:
    frame = pd.DataFrame.from_records(records)
    frame["E_exact"] = reference if reference is not None else float("nan")
    frame["dE"] = frame["E_B"] - frame["E_exact"]
    columns = list(CSV_COLUMNS)
    if config.units.t_hartree is not None:
        frame["dE_Ha"] = to_hartree(frame["dE"], config.units.t_hartree)
        columns.append("dE_Ha")
    frame["config_hash"] = config_hash
    columns.append("config_hash")
    frame["shots"] = frame["shots"].astype("Int64")
    return frame[columns]


def summarize(rows: pd.DataFrame) -> pd.DataFrame:
    """Mean / min / std (population) of E_B and E_guiding across seeds."""
    grouped = rows.groupby(SUMMARY_KEYS, sort=False)
    summary = grouped.agg(
        n_seeds=("seed", "count"),
        E_B_mean=("E_B", "mean"),
        E_B_min=("E_B", "min"),
        E_B_std=("E_B", lambda s: s.std(ddof=0)),
        E_guiding_mean=("E_guiding", "mean"),
        E_guiding_min=("E_guiding", "min"),
        E_guiding_std=("E_guiding", lambda s: s.std(ddof=0)),
    ).reset_index()
    summary["dE_min"] = summary["E_B_min"] - rows["E_exact"].iloc[0]
    return summary


def run_scan(
    config: ScanConfig,
    out_dir: Optional[Path] = None,
    threads: int = 1,
    seeds: Optional[Sequence[int]] = None,
) -> ScanOutcome:
    """
    Evaluate every (N_tau, dtau, seed, selection) combination and write the
    row CSV, the per-point summary CSV and the JSON records. Rows are kept
    in grid order whatever order the workers finish in.
    """
    model = config.model.chain()
    config_hash = config.config_hash()
    seeds = list(seeds) if seeds is not None else list(config.sampling.seeds)
    rules = config.sampling.rules()
    grid = config.schedule.points()
    prepared = PreparedModel.from_model(model)
    reference = _reference_or_none(model)

    logger.info(f"scan {config_hash}: Q={model.Q} Ne={model.Ne} {len(grid)} points x {len(seeds)} seeds x {len(rules)} selections")
    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        per_point = list(pool.map(
            lambda item: _evaluate_point(config, prepared, item[0], *item[1], seeds, rules),
            enumerate(grid),
        ))
    records = [row for point in per_point for row in point]

    rows = build_rows(records, reference, config, config_hash)
    summary = summarize(rows)
    outcome = ScanOutcome(config_hash, reference, rows, summary, records)
    if out_dir is not None:
        outcome.paths = write_scan(outcome, config, Path(out_dir))
    logger.success(f"scan {config_hash}: {len(rows)} rows, best E_B={outcome.best_energy}")
    return outcome


def write_scan(outcome: ScanOutcome, config: ScanConfig, out_dir: Path) -> Dict[str, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": out_dir / config.output.csv_name,
        "summary": out_dir / config.output.summary_name,
        "records": out_dir / config.output.records_name,
    }
    outcome.rows.to_csv(paths["csv"], index=False, na_rep="")
    outcome.summary.to_csv(paths["summary"], index=False, na_rep="")
    payload = {
        "config_hash": outcome.config_hash,
        "config": config.model_dump(mode="json"),
        "E_exact": outcome.reference,
        "rows": outcome.records,
    }
    paths["records"].write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return paths


def apply_oracle(rows: pd.DataFrame, config: ScanConfig, reference: float) -> pd.DataFrame:
    """Recompute E_exact and dE for rows of a previous scan of the same config."""
    if "config_hash" not in rows:
        raise ConfigError("scan file has no config_hash column")
    hashes = sorted(rows["config_hash"].astype(str).unique())
    if len(hashes) > 1:
        raise ConfigError(f"scan file mixes configs {hashes}; aggregate one config at a time")
    expected = config.config_hash()
    if hashes and hashes[0] != expected:
        raise ConfigError(f"scan file was produced by config {hashes[0]}, not {expected}")
    out = rows.copy()
    out["E_exact"] = reference
    out["dE"] = out["E_B"] - reference
    if config.units.t_hartree is not None:
        out["dE_Ha"] = to_hartree(out["dE"], config.units.t_hartree)
    return out


def guiding_circuit(model: ChainModel, sched: EvolutionSchedule) -> Circuit:
    """X preparation of the initial occupation followed by the compiled evolution."""
    evolution = compile_evolution(
        jordan_wigner(model.initial_hamiltonian()), jordan_wigner(model.hamiltonian()), sched
    )
    circuit = prepare_occupation(model.Q, model.initial_state())
    circuit.extend(evolution)
    circuit.n_steps = evolution.n_steps
    circuit.dropped_identity_terms = evolution.dropped_identity_terms
    return circuit


def qasm_name(ntau: int, dtau: float) -> str:
    return f"evolution_ntau{ntau}_dtau{dtau:g}.qasm"


def compile_scan(config: ScanConfig, out_dir: Path) -> Dict[str, dict]:
    """One QASM file per grid point plus resources.json."""
    model = config.model.chain()
    out_dir.mkdir(parents=True, exist_ok=True)
    resources = {}
    for ntau, dtau in config.schedule.points():
        circuit = guiding_circuit(model, EvolutionSchedule(ntau, dtau))
        name = qasm_name(ntau, dtau)
        (out_dir / name).write_text(emit_qasm(circuit), encoding="utf-8", newline="\n")
        resources[name] = {"ntau": ntau, "dtau_tau0": dtau, **circuit.resources().as_dict()}
        logger.info(f"{name}: {resources[name]['cnot_count']} CNOTs, depth {resources[name]['depth']}")
    (out_dir / "resources.json").write_text(json.dumps(resources, indent=2), encoding="utf-8")
    return resources


def compare_scan(config: ScanConfig, out_dir: Optional[Path] = None) -> ComparisonReport:
    """Both collection methods on the guiding state of the first grid point."""
    model = config.model.chain()
    prepared = PreparedModel.from_model(model)
    ntau, dtau = config.schedule.points()[0]
    state = prepared.guiding_state(EvolutionSchedule(ntau, dtau))
    methods = config.methods
    report = compare_methods(
        state,
        prepared.H,
        budget=methods.budget,
        epsilon=methods.epsilon,
        seed=config.sampling.seeds[0],
        epsilon_mode=methods.epsilon_mode,
        Ne=model.Ne if config.sampling.postselect else None,
        exact=config.sampling.shots is None,
        dense_cutoff=config.solver.dense_cutoff,
    )
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "methods.json").write_text(report.to_json(), encoding="utf-8")
    return report


def converge_scan(config: ScanConfig, out_dir: Optional[Path] = None) -> Dict[str, ConvergeResult]:
    """converge_loop over the configured grid for each selection rule (first seed)."""
    model = config.model.chain()
    results = {}
    for rule in config.sampling.rules():
        results[str(rule)] = converge_loop(
            model,
            config.schedule.points(),
            shots=config.sampling.shots,
            seed=config.sampling.seeds[0],
            selection=_effective_rule(rule, config.sampling.shots),
            tol_rel=config.solver.tol_rel,
            patience=config.solver.patience,
            expansion_depth=config.solver.expansion_depth,
        )
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        payload = {
            rule: {
                "best": {"ntau": r.best.ntau, "dtau_tau0": r.best.dtau, "E_B": r.best.energy},
                "stopped_early": r.stopped_early,
                "trace": [{"ntau": p.ntau, "dtau_tau0": p.dtau, "E_guiding": p.guiding_energy, "E_B": p.energy} for p in r.trace],
            }
            for rule, r in results.items()
        }
        (out_dir / "converge.json").write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return results
