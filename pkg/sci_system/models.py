"""
Django models for the SCI toolkit
"""
from django.db import models
from django.utils import timezone
import json


class RunRecord(models.Model):
    """One management-command run and its manifest"""

    RUN_STATUS = (
        ('running', 'Running'),
        ('completed', 'Completed'),
        ('failed', 'Failed'),
    )

    command = models.CharField(max_length=50)
    status = models.CharField(max_length=20, choices=RUN_STATUS, default='running')
    output_path = models.CharField(max_length=500, blank=True)
    seed = models.BigIntegerField(null=True, blank=True)
    error_message = models.TextField(blank=True)

    # Timing
    started_at = models.DateTimeField(default=timezone.now)
    completed_at = models.DateTimeField(null=True, blank=True)
    duration = models.FloatField(default=0.0)

    manifest_json = models.TextField(blank=True)

    class Meta:
        ordering = ['-started_at']

    def __str__(self):
        return f"{self.command} [{self.status}] {self.output_path}"

    @property
    def manifest(self):
        """Get manifest as dictionary"""
        if self.manifest_json:
            try:
                return json.loads(self.manifest_json)
            except json.JSONDecodeError:
                return {}
        return {}

    @manifest.setter
    def manifest(self, value):
        """Set manifest as JSON string"""
        self.manifest_json = json.dumps(value) if value else ""
