from django.db import models


class ExperimentRun(models.Model):
    KIND_CHOICES = [
        ('estimation-sweep', 'Estimation sweep'),
        ('threshold-sweep', 'Threshold sweep'),
        ('mac-sim', 'MAC simulation'),
        ('analysis-table', 'Analysis table'),
        ('validate', 'Validation'),
    ]
    STATUS_CHOICES = [
        ('running', 'Running'),
        ('completed', 'Completed'),
        ('passed', 'Passed'),
        ('failed', 'Failed'),
    ]

    kind = models.CharField(max_length=20, choices=KIND_CHOICES)
    seed = models.BigIntegerField()
    config = models.JSONField(default=dict)
    output_path = models.CharField(max_length=500, blank=True)
    status = models.CharField(max_length=10, choices=STATUS_CHOICES, default='running')
    summary = models.JSONField(default=dict, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        ordering = ['-created_at']

    def __str__(self):
        return f'{self.kind} (seed {self.seed}, {self.status})'
