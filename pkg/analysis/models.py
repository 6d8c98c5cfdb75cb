import uuid

from django.db import models


class AnalysisRun(models.Model):
    STATUS_CHOICES = [
        ('completed', 'Completed'),
        ('domain_error', 'Domain error'),
        ('io_error', 'I/O or schema error'),
    ]

    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)
    command = models.CharField(max_length=50)
    config = models.JSONField(default=dict, blank=True)
    input_sha256 = models.JSONField(
        default=dict, blank=True,
        help_text='Content hash of every input file, keyed by path.',
    )
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='completed')
    error_name = models.CharField(max_length=100, blank=True, default='')
    output_path = models.CharField(max_length=500, blank=True, default='')
    created_at = models.DateTimeField(auto_now_add=True, db_index=True)

    class Meta:
        ordering = ['-created_at']

    def __str__(self):
        return f'{self.created_at} {self.command} {self.status}'
