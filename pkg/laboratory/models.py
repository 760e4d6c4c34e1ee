import uuid

from django.db import models
from django.utils.translation import gettext_lazy as _
from django_extensions.db.models import TimeStampedModel

from laboratory.enum import Command, RunStatus


class LaboratoryBaseModel(TimeStampedModel):
    """
    Name: LaboratoryBaseModel
    Description: Abstract base model providing a UUID primary key and free-form metadata.
    """
    id = models.UUIDField(
        default=uuid.uuid4,
        null=False,
        blank=False,
        unique=True,
        primary_key=True,
        editable=False
    )
    metadata = models.JSONField(
        default=dict,
        null=True,
        blank=True,
        help_text=_("Stores additional metadata in JSON format.")
    )

    class Meta:
        abstract = True


class ExperimentRun(LaboratoryBaseModel):
    """
    Name: ExperimentRun
    Description: Archived run of a laboratory command with its resolved config and JSON report.
    """
    command = models.CharField(max_length=32, choices=Command.choices, db_index=True)
    status = models.CharField(max_length=16, choices=RunStatus.choices, db_index=True)
    exit_code = models.PositiveSmallIntegerField(default=0)
    seed = models.BigIntegerField(null=True, blank=True)
    config = models.JSONField(default=dict, help_text=_("Resolved experiment configuration."))
    report = models.JSONField(default=dict, help_text=_("Full report envelope."))
    version = models.CharField(max_length=32)

    class Meta:
        ordering = ['-created']
        indexes = [
            models.Index(fields=['command', 'status'], name='lab_run_command_status_idx'),
            models.Index(fields=['created'], name='lab_run_created_idx'),
        ]

    def __str__(self) -> str:
        return f"{self.command} ({self.status}) {self.id}"

    @property
    def passed(self) -> bool:
        return self.status == RunStatus.PASSED

    @classmethod
    def status_for(cls, exit_code: int) -> str:
        if exit_code == 0:
            return RunStatus.PASSED
        if exit_code == 1:
            return RunStatus.FAILED
        return RunStatus.ERROR

    @classmethod
    def archive(cls, document: dict) -> "ExperimentRun":
        """Store a report envelope."""
        config = document.get('resolved_config', {})
        return cls.objects.create(
            command=document['command'],
            status=cls.status_for(document['exit_code']),
            exit_code=document['exit_code'],
            seed=config.get('seed'),
            config=config,
            report=document,
            version=document['version'],
        )
