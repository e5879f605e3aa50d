# Generated by Django 5.1.5 on 2026-10-17 09:12

import django.db.models.deletion
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
                ('preset', models.CharField(blank=True, max_length=20)),
                ('config', models.JSONField(default=dict, help_text='SimConfig overrides applied on top of the preset')),
                ('seeds', models.JSONField(default=list)),
                ('ablation', models.BooleanField(default=False, help_text='Compare group suppression modes instead of baseline vs MP')),
                ('status', models.CharField(choices=[('pending', 'Pending'), ('finished', 'Finished'), ('failed', 'Failed')], default='pending', max_length=10)),
                ('error', models.TextField(blank=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='ExperimentResult',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('seed', models.PositiveBigIntegerField()),
                ('pipeline', models.CharField(max_length=20)),
                ('ap_base', models.FloatField(blank=True, null=True)),
                ('ap_extra', models.FloatField(blank=True, null=True)),
                ('ap_match', models.FloatField(blank=True, null=True)),
                ('mr_base', models.FloatField(blank=True, null=True)),
                ('mr_extra', models.FloatField(blank=True, null=True)),
                ('mr_match', models.FloatField(blank=True, null=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='results', to='simulation.experimentrun')),
            ],
            options={
                'ordering': ['seed', 'id'],
                'constraints': [models.UniqueConstraint(fields=('run', 'seed', 'pipeline'), name='unique_result_per_seed_pipeline')],
            },
        ),
    ]
