import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='BenchReportRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('vary', models.CharField(choices=[('length', 'length'), ('rate', 'rate'), ('neurons', 'neurons'), ('expiry', 'expiry')], max_length=20)),
                ('seed', models.BigIntegerField(blank=True, null=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('parameters', models.JSONField(default=dict, help_text='Runs, methods, epsilon, embedded pattern sizes and the base grid point')),
            ],
            options={
                'ordering': ['-created_at', '-id'],
            },
        ),
        migrations.CreateModel(
            name='BenchRowRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('value', models.FloatField(help_text='Value of the varied parameter at this grid point')),
                ('method', models.CharField(choices=[('pe', 'Parallel episodes'), ('baseline', 'Surrogate baseline')], max_length=10)),
                ('runs', models.PositiveIntegerField()),
                ('runtime_s', models.FloatField(help_text='Mean counting and significance time per run, seconds')),
                ('fpr', models.FloatField(blank=True, help_text='Pooled false positive rate; empty when nothing was reported', null=True)),
                ('found', models.PositiveIntegerField(help_text='Reported episodes of two or more types, over all runs')),
                ('embedded', models.PositiveIntegerField(help_text='Embedded patterns, over all runs')),
                ('recall', models.FloatField(blank=True, help_text='Pooled recall; empty when nothing was embedded', null=True)),
                ('report', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='rows', to='bench.benchreportrecord')),
            ],
            options={
                'ordering': ['id'],
            },
        ),
    ]
