"""
Experiment Harness Module for skyheight
Runs experiment cells (one policy over one sampled city), density sweeps,
metric aggregation, CSV/JSON outputs and log replay
"""

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .. import __version__
from ..learning.agent import EpisodeLog, make_policy, run_episode
from ..utils import CellError, ConfigError, ReplayMismatchError, SimUtils, SkyheightError
from ..world.environment import StateVariant, UavEnvironment
from ..world.radio import Channel
from ..world.topology import CityGenerator, CityTopology
from .config import POLICIES, ExperimentConfig

logger = logging.getLogger(__name__)

EPISODE_COLUMNS = [
    "cell_id", "bs_density", "build_density", "policy", "variant", "seed",
    "episode", "throughput_bits_hz",
]
STEP_COLUMNS = EPISODE_COLUMNS + ["step", "x_m", "h_m", "action", "sinr_db", "se_bits_hz"]
SUMMARY_COLUMNS = [
    "cell_id", "bs_density", "build_density", "policy", "variant", "seed", "replicate",
    "window_start", "window_end", "mean_throughput_bits_hz", "sd_throughput_bits_hz",
    "mean_height_m",
]
GROUP_KEYS = ["bs_density", "build_density", "policy", "variant"]


def _density_label(value: float) -> str:
    return f"{value:g}"


@dataclass(frozen=True)
class CellSpec:
    """One experiment cell: a policy (and variant) in one density pair, one replicate"""

    bs_density: float
    build_density: float
    policy: str
    variant: str
    replicate: int

    @property
    def cell_id(self) -> str:
        return (f"bs{_density_label(self.bs_density)}_bl{_density_label(self.build_density)}"
                f"_{self.policy}_{self.variant}_r{self.replicate}")

    def seed(self, master_seed: int) -> int:
        """Cell seed: sha256 over (master, densities, policy, variant, replicate)"""
        return SimUtils.derive_seed(master_seed, "cell", float(self.bs_density),
                                    float(self.build_density), self.policy, self.variant,
                                    self.replicate)

    def topology_seed(self, master_seed: int) -> int:
        """BS-position seed, shared by every cell with the same BS density and replicate"""
        return SimUtils.derive_seed(master_seed, "topology-bs", float(self.bs_density),
                                    self.replicate)

    def building_seed(self, master_seed: int) -> int:
        """Building-height seed, shared by every cell with the same building density and replicate"""
        return SimUtils.derive_seed(master_seed, "topology-build", float(self.build_density),
                                    self.replicate)

    def to_dict(self) -> Dict:
        return {
            "cell_id": self.cell_id,
            "bs_density": self.bs_density,
            "build_density": self.build_density,
            "policy": self.policy,
            "variant": self.variant,
            "replicate": self.replicate,
        }


@dataclass
class CellResult:
    """Tidy frames produced by one cell, or the error that stopped it"""

    cell: CellSpec
    episodes: Optional[pd.DataFrame] = None
    steps: Optional[pd.DataFrame] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class SummaryRow:
    """Window aggregate of one cell"""

    cell_id: str
    bs_density: float
    build_density: float
    policy: str
    variant: str
    seed: int
    replicate: int
    window_start: int
    window_end: int
    mean_throughput_bits_hz: float
    sd_throughput_bits_hz: float
    mean_height_m: float


def _run_cell_job(config_data: Dict, cell: CellSpec) -> CellResult:
    """Process-pool entry point"""
    harness = ExperimentHarness(ExperimentConfig.from_dict(config_data))
    return harness.run_cell_safely(cell)


class ExperimentHarness:
    """
    Orchestrates cells, sweeps and their outputs
    """

    def __init__(self, config: Optional[ExperimentConfig] = None):
        """
        Initialize the harness

        Args:
            config: Experiment configuration (defaults if None)
        """
        self.config = config or ExperimentConfig()
        self.config.validate()

    def cells(self) -> List[CellSpec]:
        """
        Enumerate the sweep in its canonical order

        Returns:
            List[CellSpec]: density cell, then policy (DQN expanded per variant), then replicate
        """
        cfg = self.config
        cells: List[CellSpec] = []
        for bs, build in cfg.density_cells():
            for policy in cfg.policies:
                variants = cfg.variants if policy == "dqn" else ["none"]
                for variant in variants:
                    for replicate in range(cfg.replicates):
                        cells.append(CellSpec(bs, build, policy, variant, replicate))
        return cells

    def make_cell(self, bs_density: float, build_density: float, policy: str,
                  variant: Optional[str] = None, replicate: int = 0) -> CellSpec:
        """Build a single validated cell (variant 'basic' for DQN by default)"""
        policy = policy.lower()
        if policy == "dqn":
            try:
                variant = StateVariant(variant or StateVariant.BASIC.value).value
            except ValueError:
                raise ConfigError(f"Unknown state variant '{variant}'") from None
        elif policy in POLICIES:
            variant = "none"
        else:
            raise ConfigError(f"Unknown policy '{policy}'")
        if bs_density <= 0 or build_density <= 0:
            raise ConfigError(f"Densities must be positive, got {bs_density}, {build_density}")
        return CellSpec(float(bs_density), float(build_density), policy, variant, int(replicate))

    def topology_for(self, cell: CellSpec) -> CityTopology:
        return CityGenerator.generate(cell.bs_density, cell.build_density,
                                      cell.topology_seed(self.config.master_seed),
                                      self.config.topology,
                                      building_seed=cell.building_seed(self.config.master_seed))

    def environment_for(self, topology: CityTopology) -> UavEnvironment:
        return UavEnvironment(topology, self.config.radio, self.config.episode,
                              path_margin_m=self.config.topology.path_margin_m)

    def iter_cell(self, cell: CellSpec) -> Iterator[EpisodeLog]:
        """
        Run every episode of one cell

        The topology is generated once; exploration, replay, environment and
        network initialization each use their own substream of the cell seed.

        Args:
            cell: Cell to run

        Yields:
            EpisodeLog: One log per episode, with step records for traced episodes
        """
        cfg = self.config
        seed = cell.seed(cfg.master_seed)
        topology = self.topology_for(cell)
        environment = self.environment_for(topology)
        variant = StateVariant.BASIC if cell.variant == "none" else StateVariant(cell.variant)
        policy = make_policy(
            cell.policy, variant, cfg.episode.observation_size(variant), cfg.agent,
            init_rng=SimUtils.substream(seed, "network-init"),
            replay_rng=SimUtils.substream(seed, "replay"),
        )
        exploration_rng = SimUtils.substream(seed, "exploration")
        env_rng = SimUtils.substream(seed, "environment")
        traced = set(cfg.traced_episodes())

        for episode in range(1, cfg.episodes + 1):
            log = run_episode(policy, environment, exploration_rng, episode=episode,
                              keep_steps=episode in traced, env_rng=env_rng)
            log.cell_id = cell.cell_id
            log.bs_density = cell.bs_density
            log.build_density = cell.build_density
            log.variant = cell.variant
            log.seed = seed
            log.replicate = cell.replicate
            yield log

    def run_cell(self, cell: CellSpec) -> List[EpisodeLog]:
        """
        Run one cell to completion

        Raises:
            CellError: Wrapping any failure with the cell id
        """
        logger.info("Running cell %s", cell.cell_id)
        try:
            logs = list(self.iter_cell(cell))
        except Exception as e:
            raise CellError(cell.cell_id, e) from e
        mean = float(np.mean([log.throughput_bits_hz for log in logs]))
        logger.info("Finished cell %s: mean throughput %.2f bits/Hz", cell.cell_id, mean)
        return logs

    def run_cell_safely(self, cell: CellSpec) -> CellResult:
        """Run a cell into tidy frames; failures are captured instead of raised"""
        try:
            logs = self.run_cell(cell)
        except CellError as e:
            logger.error("%s", e)
            return CellResult(cell=cell, error=str(e))
        return CellResult(cell=cell, episodes=self.episode_frame(logs),
                          steps=self.step_frame(logs))

    @staticmethod
    def episode_frame(logs: Sequence[EpisodeLog]) -> pd.DataFrame:
        """Episode rows plus the replicate and mean height used by the summaries"""
        rows = [{
            "cell_id": log.cell_id,
            "bs_density": log.bs_density,
            "build_density": log.build_density,
            "policy": log.policy,
            "variant": log.variant,
            "seed": log.seed,
            "episode": log.episode,
            "throughput_bits_hz": log.throughput_bits_hz,
            "replicate": log.replicate,
            "mean_height_m": log.mean_height_m,
        } for log in logs]
        return pd.DataFrame(rows, columns=EPISODE_COLUMNS + ["replicate", "mean_height_m"])

    @staticmethod
    def step_frame(logs: Sequence[EpisodeLog]) -> pd.DataFrame:
        rows = []
        for log in logs:
            if not log.steps:
                continue
            for record in log.steps:
                rows.append({
                    "cell_id": log.cell_id,
                    "bs_density": log.bs_density,
                    "build_density": log.build_density,
                    "policy": log.policy,
                    "variant": log.variant,
                    "seed": log.seed,
                    "episode": log.episode,
                    "throughput_bits_hz": log.throughput_bits_hz,
                    "step": record.step,
                    "x_m": record.x_m,
                    "h_m": record.h_m,
                    "action": record.action,
                    "sinr_db": record.sinr_db,
                    "se_bits_hz": record.se_bits_hz,
                })
        return pd.DataFrame(rows, columns=STEP_COLUMNS)

    def summarize(self, episodes: pd.DataFrame,
                  window: Optional[Tuple[int, int]] = None) -> pd.DataFrame:
        """
        Mean and standard deviation of throughput over an episode window, per cell

        Args:
            episodes: Episode frame (mean_height_m and replicate columns optional)
            window: Inclusive (start, end) episodes; the configured window if None

        Returns:
            pd.DataFrame: One SummaryRow per cell, in first-appearance order
        """
        start, end = window or self.config.window()
        if not 1 <= start <= end:
            raise ValueError(f"Invalid summary window ({start}, {end})")
        rows: List[Dict] = []
        if episodes.empty:
            return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
        selected = episodes[(episodes["episode"] >= start) & (episodes["episode"] <= end)]
        for cell_id, group in selected.groupby("cell_id", sort=False):
            first = group.iloc[0]
            throughput = group["throughput_bits_hz"].to_numpy(dtype=np.float64)
            heights = (group["mean_height_m"].to_numpy(dtype=np.float64)
                       if "mean_height_m" in group else np.array([np.nan]))
            row = SummaryRow(
                cell_id=str(cell_id),
                bs_density=float(first["bs_density"]),
                build_density=float(first["build_density"]),
                policy=str(first["policy"]),
                variant=str(first["variant"]),
                seed=int(first["seed"]),
                replicate=int(first["replicate"]) if "replicate" in group else 0,
                window_start=start,
                window_end=end,
                mean_throughput_bits_hz=float(np.mean(throughput)),
                sd_throughput_bits_hz=float(np.std(throughput, ddof=1)) if len(throughput) > 1 else 0.0,
                mean_height_m=float(np.mean(heights)),
            )
            rows.append(asdict(row))
        return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)

    @staticmethod
    def compare(summary: pd.DataFrame) -> pd.DataFrame:
        """
        Replicate-aggregated throughput per policy with improvements over the baselines

        Args:
            summary: Output of summarize

        Returns:
            pd.DataFrame: Mean/sd across replicates, mean height, and percent
                improvement over the Constant and Genie baselines of the same
                density pair (NaN when that baseline was not run)
        """
        columns = GROUP_KEYS + [
            "replicates", "mean_throughput_bits_hz", "sd_throughput_bits_hz", "mean_height_m",
            "improvement_vs_constant_pct", "improvement_vs_genie_pct",
        ]
        if summary.empty:
            return pd.DataFrame(columns=columns)
        grouped = summary.groupby(GROUP_KEYS, sort=False).agg(
            replicates=("mean_throughput_bits_hz", "size"),
            mean_throughput_bits_hz=("mean_throughput_bits_hz", "mean"),
            sd_throughput_bits_hz=("mean_throughput_bits_hz", "std"),
            mean_height_m=("mean_height_m", "mean"),
        ).reset_index()
        grouped["sd_throughput_bits_hz"] = grouped["sd_throughput_bits_hz"].fillna(0.0)

        def baseline(name: str) -> pd.Series:
            base = grouped[grouped["policy"] == name].set_index(["bs_density", "build_density"])
            keys = pd.MultiIndex.from_frame(grouped[["bs_density", "build_density"]])
            return pd.Series(
                base["mean_throughput_bits_hz"].reindex(keys).to_numpy(), index=grouped.index
            )

        for name in ("constant", "genie"):
            reference = baseline(name)
            grouped[f"improvement_vs_{name}_pct"] = (
                (grouped["mean_throughput_bits_hz"] - reference) / reference * 100.0
            )
        return grouped[columns]

    @staticmethod
    def learning_curve(episodes: pd.DataFrame) -> pd.DataFrame:
        """Per-episode mean and sample sd of throughput across replicates"""
        columns = GROUP_KEYS + ["episode", "replicates", "mean_throughput_bits_hz",
                                "sd_throughput_bits_hz"]
        if episodes.empty:
            return pd.DataFrame(columns=columns)
        curves = episodes.groupby(GROUP_KEYS + ["episode"], sort=False).agg(
            replicates=("throughput_bits_hz", "size"),
            mean_throughput_bits_hz=("throughput_bits_hz", "mean"),
            sd_throughput_bits_hz=("throughput_bits_hz", "std"),
        ).reset_index()
        curves["sd_throughput_bits_hz"] = curves["sd_throughput_bits_hz"].fillna(0.0)
        return curves[columns]

    def execute(self, cells: Sequence[CellSpec], out_dir: Union[str, Path],
                jobs: Optional[int] = None) -> Tuple[pd.DataFrame, List[CellResult]]:
        """
        Run cells (possibly in parallel) and write every output file

        Results are merged in the given cell order, so file content does not
        depend on the job count.

        Args:
            cells: Cells to run
            out_dir: Output directory (created if missing)
            jobs: Worker processes (config.jobs if None)

        Returns:
            Tuple[pd.DataFrame, List[CellResult]]: Summary table and per-cell results

        Raises:
            SkyheightError: If no cells are selected or out_dir is an existing file
        """
        if not cells:
            raise SkyheightError("nothing to run: the configuration selects no cells")
        out = Path(out_dir)
        if out.exists() and not out.is_dir():
            raise SkyheightError(f"output path {out} exists and is not a directory")
        out.mkdir(parents=True, exist_ok=True)
        jobs = jobs or self.config.jobs

        if jobs > 1 and len(cells) > 1:
            config_data = self.config.to_dict()
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [pool.submit(_run_cell_job, config_data, cell) for cell in cells]
                results = []
                for cell, future in zip(cells, futures):
                    try:
                        results.append(future.result())
                    except Exception as e:
                        logger.error("cell %s failed in worker: %s", cell.cell_id, e)
                        results.append(CellResult(cell=cell, error=f"cell {cell.cell_id} failed: {e}"))
        else:
            results = [self.run_cell_safely(cell) for cell in cells]

        succeeded = [r for r in results if r.ok]
        episodes = (pd.concat([r.episodes for r in succeeded], ignore_index=True)
                    if succeeded else self.episode_frame([]))
        steps = (pd.concat([r.steps for r in succeeded], ignore_index=True)
                 if succeeded else pd.DataFrame(columns=STEP_COLUMNS))
        summary = self.summarize(episodes)

        episodes[EPISODE_COLUMNS].to_csv(out / "episodes.csv", index=False)
        steps[STEP_COLUMNS].to_csv(out / "steps.csv", index=False)
        summary.to_csv(out / "summary.csv", index=False)
        self.compare(summary).to_csv(out / "comparison.csv", index=False)
        self.learning_curve(episodes).to_csv(out / "curves.csv", index=False)
        self.write_manifest(out, results)

        failed = len(results) - len(succeeded)
        if failed:
            logger.warning("%d of %d cells failed; see manifest.json", failed, len(results))
        return summary, results

    def sweep(self, out_dir: Union[str, Path], jobs: Optional[int] = None) -> pd.DataFrame:
        """
        Run the full density sweep

        Args:
            out_dir: Output directory
            jobs: Worker processes (config.jobs if None)

        Returns:
            pd.DataFrame: Summary table
        """
        cells = self.cells()
        logger.info("Sweep of %d cells x %d episodes", len(cells), self.config.episodes)
        summary, _ = self.execute(cells, out_dir, jobs)
        return summary

    def write_manifest(self, out: Path, results: Sequence[CellResult]) -> None:
        master = self.config.master_seed
        manifest = {
            "version": __version__,
            "master_seed": master,
            "config": self.config.to_dict(),
            "cells": [
                {
                    **r.cell.to_dict(),
                    "seed": r.cell.seed(master),
                    "topology_seed": r.cell.topology_seed(master),
                    "building_seed": r.cell.building_seed(master),
                    "status": "ok" if r.ok else "failed",
                    "error": r.error,
                }
                for r in results
            ],
        }
        with open(out / "manifest.json", "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2)

    @staticmethod
    def replay(out_dir: Union[str, Path], tol: float = 1e-9) -> int:
        """
        Recompute every logged spectral efficiency from its logged pose

        Each cell's topology is regenerated from the manifest, then every
        steps.csv row's (x, h) is re-evaluated. Episode throughputs are checked
        against the sum of their step values.

        Args:
            out_dir: Directory holding manifest.json and steps.csv
            tol: Absolute tolerance

        Returns:
            int: Number of step rows verified

        Raises:
            ReplayMismatchError: Naming the first row that does not reproduce
        """
        out = Path(out_dir)
        with open(out / "manifest.json", "r", encoding="utf-8") as f:
            manifest = json.load(f)
        config = ExperimentConfig.from_dict(manifest["config"])
        harness = ExperimentHarness(config)
        cells = {c["cell_id"]: c for c in manifest["cells"]}
        steps = pd.read_csv(out / "steps.csv", float_precision="round_trip")

        environments: Dict[str, UavEnvironment] = {}
        for row_idx, row in enumerate(steps.itertuples(index=False), start=1):
            cell_id = row.cell_id
            if cell_id not in environments:
                if cell_id not in cells:
                    raise SkyheightError(f"steps.csv row {row_idx}: unknown cell {cell_id}")
                entry = cells[cell_id]
                topology = CityGenerator.generate(entry["bs_density"], entry["build_density"],
                                                  int(entry["topology_seed"]), config.topology,
                                                  building_seed=int(entry["building_seed"]))
                environments[cell_id] = harness.environment_for(topology)
            _, sinr = environments[cell_id].evaluate_pose(float(row.x_m), float(row.h_m))
            recomputed = Channel.spectral_efficiency(sinr)
            if not abs(recomputed - float(row.se_bits_hz)) <= tol:
                logger.error("Replay mismatch at steps.csv row %d (cell %s)", row_idx, cell_id)
                raise ReplayMismatchError(row_idx, float(row.se_bits_hz), recomputed)

        if not steps.empty:
            positions = pd.Series(np.arange(1, len(steps) + 1), index=steps.index)
            for _, group in steps.groupby(["cell_id", "episode"], sort=False):
                total = float(group["se_bits_hz"].sum())
                logged = float(group["throughput_bits_hz"].iloc[0])
                if not math.isclose(total, logged, rel_tol=tol, abs_tol=tol):
                    raise ReplayMismatchError(int(positions[group.index[0]]), logged, total)
        logger.info("Replayed %d step rows from %s", len(steps), out)
        return len(steps)
