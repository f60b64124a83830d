from django.db import models

from .services import BenchDefaults, BenchReport, BenchRow


class BenchReportRecord(models.Model):
    """
    A saved benchmark sweep: which parameter was varied and the settings it ran with
    """
    VARY_CHOICES = [(name, name) for name in BenchDefaults.VARY]

    vary = models.CharField(max_length=20, choices=VARY_CHOICES)
    seed = models.BigIntegerField(null=True, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)
    parameters = models.JSONField(
        default=dict,
        help_text="Runs, methods, epsilon, embedded pattern sizes and the base grid point"
    )

    class Meta:
        ordering = ['-created_at', '-id']

    def __str__(self):
        return f"bench {self.vary} ({self.created_at:%Y-%m-%d %H:%M})"

    @classmethod
    def from_report(cls, report: BenchReport) -> 'BenchReportRecord':
        record = cls.objects.create(vary=report.vary, seed=report.seed, parameters=report.parameters)
        BenchRowRecord.objects.bulk_create([
            BenchRowRecord(report=record, **vars(row)) for row in report.rows
        ])
        return record

    def to_report(self) -> BenchReport:
        rows = [
            BenchRow(
                value=row.value,
                method=row.method,
                runs=row.runs,
                runtime_s=row.runtime_s,
                fpr=row.fpr,
                found=row.found,
                embedded=row.embedded,
                recall=row.recall,
            )
            for row in self.rows.all()
        ]
        return BenchReport(vary=self.vary, rows=rows, seed=self.seed, parameters=self.parameters)


class BenchRowRecord(models.Model):
    """
    One grid value and method of a saved sweep
    """
    METHOD_CHOICES = [
        (BenchDefaults.PE, 'Parallel episodes'),
        (BenchDefaults.BASELINE, 'Surrogate baseline'),
    ]

    report = models.ForeignKey(BenchReportRecord, on_delete=models.CASCADE, related_name='rows')
    value = models.FloatField(help_text="Value of the varied parameter at this grid point")
    method = models.CharField(max_length=10, choices=METHOD_CHOICES)
    runs = models.PositiveIntegerField()
    runtime_s = models.FloatField(help_text="Mean counting and significance time per run, seconds")
    fpr = models.FloatField(null=True, blank=True, help_text="Pooled false positive rate; empty when nothing was reported")
    found = models.PositiveIntegerField(help_text="Reported episodes of two or more types, over all runs")
    embedded = models.PositiveIntegerField(help_text="Embedded patterns, over all runs")
    recall = models.FloatField(null=True, blank=True, help_text="Pooled recall; empty when nothing was embedded")

    class Meta:
        ordering = ['id']

    def __str__(self):
        return f"{self.report.vary}={self.value:g} {self.method}"
