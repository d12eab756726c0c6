"""
LoAd Platform - Database Models

This module defines the run registry:
    - RunStatus: lifecycle states shared by runs and repeats
    - ExperimentRun: one CLI invocation that writes an output directory
    - RepeatResult: metrics of one repeat of one direction within a run

Created:    2026
License:    MIT - See LICENSE file
"""

import math

from django.db import models
from django.utils import timezone


# ============================================================================
# STATUS
# ============================================================================

class RunStatus:
    RUNNING = 'running'
    COMPLETED = 'completed'
    FAILED = 'failed'

    CHOICES = [
        (RUNNING, 'Running'),
        (COMPLETED, 'Completed'),
        (FAILED, 'Failed'),
    ]


def _finite_or_none(value):
    return None if value is None or math.isnan(value) else float(value)


# ============================================================================
# RUNS
# ============================================================================

class ExperimentRun(models.Model):
    subcommand = models.CharField(max_length=32)
    output_dir = models.CharField(max_length=512, unique=True)
    config_hash = models.CharField(max_length=12, blank=True)
    config_text = models.TextField(blank=True)
    status = models.CharField(
        max_length=16,
        choices=RunStatus.CHOICES,
        default=RunStatus.RUNNING,
    )
    error = models.TextField(blank=True)
    started_at = models.DateTimeField(default=timezone.now)
    finished_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        ordering = ["-started_at"]
        indexes = [
            models.Index(fields=["config_hash", "status"], name="load_run_hash_status_idx"),
        ]

    def __str__(self):
        return f"{self.subcommand} {self.output_dir} ({self.status})"

    @property
    def is_completed(self):
        return self.status == RunStatus.COMPLETED

    @property
    def duration(self):
        if self.finished_at is None:
            return None
        return (self.finished_at - self.started_at).total_seconds()

    def finish(self, status, error=""):
        self.status = status
        self.error = error
        self.finished_at = timezone.now()
        self.save(update_fields=["status", "error", "finished_at"])

    def record_outcomes(self, record):
        """Store the repeats of one MetricsRecord, replacing earlier rows for the same slot."""
        for outcome in record.outcomes:
            RepeatResult.objects.update_or_create(
                run=self,
                preset=record.preset,
                direction=record.direction,
                protocol=record.protocol,
                repeat=outcome.repeat,
                defaults={
                    "seed": outcome.seed,
                    "source_test_acc": _finite_or_none(outcome.source_test_acc),
                    "target_acc": _finite_or_none(outcome.target_acc),
                    "seconds": outcome.seconds,
                    "status": RunStatus.COMPLETED if outcome.completed else RunStatus.FAILED,
                    "error": outcome.error,
                },
            )


class RepeatResult(models.Model):
    run = models.ForeignKey(
        ExperimentRun,
        related_name="repeats",
        on_delete=models.CASCADE,
    )
    preset = models.CharField(max_length=32)
    direction = models.CharField(max_length=8)
    protocol = models.CharField(max_length=16)
    repeat = models.PositiveIntegerField()
    seed = models.BigIntegerField()
    source_test_acc = models.FloatField(null=True, blank=True)
    target_acc = models.FloatField(null=True, blank=True)
    seconds = models.FloatField(default=0.0)
    status = models.CharField(
        max_length=16,
        choices=RunStatus.CHOICES,
        default=RunStatus.COMPLETED,
    )
    error = models.TextField(blank=True)

    class Meta:
        ordering = ["run", "preset", "direction", "repeat"]
        constraints = [
            models.UniqueConstraint(
                fields=["run", "preset", "direction", "protocol", "repeat"],
                name="load_repeat_unique_slot",
            ),
        ]

    def __str__(self):
        return f"{self.preset} {self.direction} repeat {self.repeat}: {self.target_acc}"
