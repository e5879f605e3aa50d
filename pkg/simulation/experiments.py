"""
Baseline vs grouped-detector comparison on simulated scenes.

baseline: per-class NMS on independent detections, then Hungarian pairing.
mp:       one grouped detection per proposal, then set suppression.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.stats import binomtest

from detections.association import associate_groups
from detections.groups import DatasetHeader, FlatDetection, GroupDetection
from detections.suppression import SuppressionMode, SuppressionParams, flat_nms_indices, group_suppress
from evaluation.metrics import evaluate, evaluate_flat, metric_summary, parallel_map
from .config import SimConfig
from .scenes import GROUPED, INDEPENDENT, SimScene, generate_scenes, simulate_detector

logger = logging.getLogger(__name__)

BASELINE = "baseline"
MP = "mp"
ABLATION_PIPELINES = {
    "mp_base": SuppressionMode.BASE_ONLY,
    "mp_joint": SuppressionMode.JOINT,
    "mp_set": SuppressionMode.SET,
}
METRICS = ("ap_base", "ap_extra", "ap_match", "mr_base", "mr_extra", "mr_match")
CSV_COLUMNS = ("seed", "pipeline") + METRICS


@dataclass(frozen=True)
class ResultRow:
    seed: int
    pipeline: str
    metrics: dict[str, float]

    def as_csv(self) -> list[str]:
        return [str(self.seed), self.pipeline] + [repr(float(self.metrics[m])) for m in METRICS]


@dataclass
class ExperimentTable:
    rows: list[ResultRow] = field(default_factory=list)

    @property
    def pipelines(self) -> list[str]:
        return list(dict.fromkeys(r.pipeline for r in self.rows))

    def values(self, pipeline: str, metric: str) -> list[float]:
        return [r.metrics[metric] for r in self.rows if r.pipeline == pipeline]

    def aggregate(self) -> dict[str, dict[str, tuple[float, float]]]:
        """Mean and sample standard deviation per pipeline and metric (NaN values skipped)."""
        summary = {}
        for pipeline in self.pipelines:
            summary[pipeline] = {}
            for metric in METRICS:
                values = np.array(self.values(pipeline, metric), dtype=np.float64)
                values = values[~np.isnan(values)]
                if values.size == 0:
                    summary[pipeline][metric] = (float("nan"), float("nan"))
                    continue
                stdev = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
                summary[pipeline][metric] = (float(np.mean(values)), stdev)
        return summary

    def gaps(self, treatment: str = MP, control: str = BASELINE, metric: str = "ap_match") -> list[float]:
        """Per-seed treatment minus control."""
        control_by_seed = {r.seed: r.metrics[metric] for r in self.rows if r.pipeline == control}
        return [
            r.metrics[metric] - control_by_seed[r.seed]
            for r in self.rows
            if r.pipeline == treatment and r.seed in control_by_seed
        ]

    def sign_test(self, treatment: str = MP, control: str = BASELINE, metric: str = "ap_match") -> float:
        """One-sided sign test p-value for treatment > control; ties are dropped."""
        gaps = [g for g in self.gaps(treatment, control, metric) if g != 0 and not np.isnan(g)]
        if not gaps:
            return 1.0
        wins = sum(1 for g in gaps if g > 0)
        return float(binomtest(wins, len(gaps), 0.5, alternative="greater").pvalue)


def simulation_header(cfg: SimConfig) -> DatasetHeader:
    return DatasetHeader(
        base_class_names=("base",),
        extra_class_names=("extra",),
        image_sizes={str(i): list(cfg.image_size) for i in range(cfg.images)},
    )


def baseline_detections(scenes: Sequence[SimScene], cfg: SimConfig, arity: int = 1):
    """Per-class NMS per image, then pairing; returns (kept flat detections, groups)."""
    kept: list[FlatDetection] = []
    groups: list[GroupDetection] = []
    for scene in scenes:
        dets = scene.detections_independent
        keep = flat_nms_indices(dets, cfg.nms_iou_threshold)
        image_kept = [dets[i] for i in keep]
        kept.extend(image_kept)
        groups.extend(associate_groups(image_kept, arity, cfg.match_iou_floor))
    return kept, groups


def grouped_detections(scenes: Sequence[SimScene], cfg: SimConfig, mode: SuppressionMode) -> list[GroupDetection]:
    params = SuppressionParams(cfg.nms_iou_threshold, mode)
    kept: list[GroupDetection] = []
    for scene in scenes:
        kept.extend(group_suppress(scene.detections_grouped, params))
    return kept


def simulate_seed(cfg: SimConfig) -> list[SimScene]:
    scenes = generate_scenes(cfg)
    scenes = simulate_detector(scenes, cfg, INDEPENDENT)
    return simulate_detector(scenes, cfg, GROUPED)


def _baseline_row(scenes, cfg, header, gts) -> ResultRow:
    flat, groups = baseline_detections(scenes, cfg, header.arity)
    per_class = metric_summary(evaluate_flat(flat, gts, cfg.eval_iou_threshold, header))
    matched = metric_summary(evaluate(groups, gts, cfg.eval_iou_threshold, header))
    metrics = {**per_class, "ap_match": matched["ap_match"], "mr_match": matched["mr_match"]}
    return ResultRow(cfg.seed, BASELINE, metrics)


def _grouped_row(scenes, cfg, header, gts, pipeline: str, mode: SuppressionMode) -> ResultRow:
    kept = grouped_detections(scenes, cfg, mode)
    return ResultRow(cfg.seed, pipeline, metric_summary(evaluate(kept, gts, cfg.eval_iou_threshold, header)))


def _run_seed(cfg: SimConfig, ablation: bool) -> list[ResultRow]:
    scenes = simulate_seed(cfg)
    header = simulation_header(cfg)
    gts = [g for scene in scenes for g in scene.gts]
    if ablation:
        return [_grouped_row(scenes, cfg, header, gts, name, mode) for name, mode in ABLATION_PIPELINES.items()]
    return [_baseline_row(scenes, cfg, header, gts), _grouped_row(scenes, cfg, header, gts, MP, SuppressionMode.SET)]


def _run(cfg: SimConfig, seeds: Iterable[int], ablation: bool, threads: int) -> ExperimentTable:
    seeds = list(seeds)
    if not seeds:
        raise ValueError("at least one seed is required")
    per_seed = parallel_map(lambda seed: _run_seed(cfg.with_seed(seed), ablation), seeds, threads)
    table = ExperimentTable([row for rows in per_seed for row in rows])
    logger.info(f"finished {'NMS ablation' if ablation else 'experiment'} over {len(seeds)} seeds")
    return table


def run_experiment(cfg: SimConfig, seeds: Iterable[int], threads: int = 1) -> ExperimentTable:
    """Baseline and MP pipelines against the same ground truth, one row per seed and pipeline."""
    return _run(cfg, seeds, ablation=False, threads=threads)


def run_nms_ablation(cfg: SimConfig, seeds: Iterable[int], threads: int = 1) -> ExperimentTable:
    """The grouped pipeline under base-only, joint and set suppression."""
    return _run(cfg, seeds, ablation=True, threads=threads)


def write_results_csv(path: Union[str, Path], table: ExperimentTable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        writer.writerows(row.as_csv() for row in table.rows)
