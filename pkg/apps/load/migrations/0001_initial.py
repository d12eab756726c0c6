# Generated by Django 5.2.8 on 2026-10-17 09:12

import django.db.models.deletion
import django.utils.timezone
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
                ('subcommand', models.CharField(max_length=32)),
                ('output_dir', models.CharField(max_length=512, unique=True)),
                ('config_hash', models.CharField(blank=True, max_length=12)),
                ('config_text', models.TextField(blank=True)),
                ('status', models.CharField(choices=[('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], default='running', max_length=16)),
                ('error', models.TextField(blank=True)),
                ('started_at', models.DateTimeField(default=django.utils.timezone.now)),
                ('finished_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'ordering': ['-started_at'],
                'indexes': [models.Index(fields=['config_hash', 'status'], name='load_run_hash_status_idx')],
            },
        ),
        migrations.CreateModel(
            name='RepeatResult',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('preset', models.CharField(max_length=32)),
                ('direction', models.CharField(max_length=8)),
                ('protocol', models.CharField(max_length=16)),
                ('repeat', models.PositiveIntegerField()),
                ('seed', models.BigIntegerField()),
                ('source_test_acc', models.FloatField(blank=True, null=True)),
                ('target_acc', models.FloatField(blank=True, null=True)),
                ('seconds', models.FloatField(default=0.0)),
                ('status', models.CharField(choices=[('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], default='completed', max_length=16)),
                ('error', models.TextField(blank=True)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='repeats', to='load.experimentrun')),
            ],
            options={
                'ordering': ['run', 'preset', 'direction', 'repeat'],
                'constraints': [models.UniqueConstraint(fields=('run', 'preset', 'direction', 'protocol', 'repeat'), name='load_repeat_unique_slot')],
            },
        ),
    ]
