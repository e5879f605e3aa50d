import logging
import math

from django.db import models, transaction

from detections.exceptions import DetmatchError

from .config import build_config
from .experiments import METRICS, ExperimentTable, ResultRow, run_experiment, run_nms_ablation

logger = logging.getLogger(__name__)


class ExperimentRun(models.Model):
    STATUS_CHOICES = [
        ('pending', 'Pending'),
        ('finished', 'Finished'),
        ('failed', 'Failed'),
    ]

    preset = models.CharField(max_length=20, blank=True)
    config = models.JSONField(default=dict, help_text="SimConfig overrides applied on top of the preset")
    seeds = models.JSONField(default=list)
    ablation = models.BooleanField(default=False, help_text="Compare group suppression modes instead of baseline vs MP")
    status = models.CharField(max_length=10, choices=STATUS_CHOICES, default='pending')
    error = models.TextField(blank=True)
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        ordering = ['-created_at']

    def __str__(self):
        kind = "NMS ablation" if self.ablation else "experiment"
        return f"{kind} #{self.pk} ({self.preset or 'custom'}, {len(self.seeds)} seeds)"

    def sim_config(self):
        return build_config(self.config, self.preset or None, source=f"run {self.pk}")

    def execute(self, threads=1):
        """Run the experiment synchronously and store one result per seed and pipeline."""
        try:
            cfg = self.sim_config()
            runner = run_nms_ablation if self.ablation else run_experiment
            table = runner(cfg, self.seeds, threads=threads)
        except DetmatchError as exc:
            logger.warning(f"experiment run {self.pk} failed: {exc}")
            self.status = 'failed'
            self.error = str(exc)
            self.save(update_fields=['status', 'error', 'updated_at'])
            raise
        self.store(table)
        return table

    @transaction.atomic
    def store(self, table: ExperimentTable):
        self.results.all().delete()
        ExperimentResult.objects.bulk_create(ExperimentResult.from_row(self, row) for row in table.rows)
        self.status = 'finished'
        self.error = ''
        self.save(update_fields=['status', 'error', 'updated_at'])
        logger.info(f"stored {len(table.rows)} results for experiment run {self.pk}")

    def table(self) -> ExperimentTable:
        return ExperimentTable([result.as_row() for result in self.results.all()])


class ExperimentResult(models.Model):
    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name='results')
    seed = models.PositiveBigIntegerField()
    pipeline = models.CharField(max_length=20)
    # Undefined metrics (no ground truth for a class) are stored as NULL.
    ap_base = models.FloatField(null=True, blank=True)
    ap_extra = models.FloatField(null=True, blank=True)
    ap_match = models.FloatField(null=True, blank=True)
    mr_base = models.FloatField(null=True, blank=True)
    mr_extra = models.FloatField(null=True, blank=True)
    mr_match = models.FloatField(null=True, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['seed', 'id']
        constraints = [
            models.UniqueConstraint(fields=['run', 'seed', 'pipeline'], name='unique_result_per_seed_pipeline'),
        ]

    def __str__(self):
        return f"{self.pipeline} seed {self.seed} (run #{self.run_id})"

    @classmethod
    def from_row(cls, run, row: ResultRow):
        values = {m: (None if math.isnan(row.metrics[m]) else row.metrics[m]) for m in METRICS}
        return cls(run=run, seed=row.seed, pipeline=row.pipeline, **values)

    def as_row(self) -> ResultRow:
        metrics = {m: (math.nan if getattr(self, m) is None else getattr(self, m)) for m in METRICS}
        return ResultRow(self.seed, self.pipeline, metrics)
