# Generated by Django 5.1.2 on 2026-10-19 10:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('kind', models.CharField(choices=[('estimation-sweep', 'Estimation sweep'), ('threshold-sweep', 'Threshold sweep'), ('mac-sim', 'MAC simulation'), ('analysis-table', 'Analysis table'), ('validate', 'Validation')], max_length=20)),
                ('seed', models.BigIntegerField()),
                ('config', models.JSONField(default=dict)),
                ('output_path', models.CharField(blank=True, max_length=500)),
                ('status', models.CharField(choices=[('running', 'Running'), ('completed', 'Completed'), ('passed', 'Passed'), ('failed', 'Failed')], default='running', max_length=10)),
                ('summary', models.JSONField(blank=True, default=dict)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
    ]
