# Generated by Django 4.2 on 2026-10-19 09:12

import uuid
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='AnalysisRun',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('command', models.CharField(max_length=50)),
                ('config', models.JSONField(blank=True, default=dict)),
                ('input_sha256', models.JSONField(blank=True, default=dict, help_text='Content hash of every input file, keyed by path.')),
                ('status', models.CharField(choices=[('completed', 'Completed'), ('domain_error', 'Domain error'), ('io_error', 'I/O or schema error')], default='completed', max_length=20)),
                ('error_name', models.CharField(blank=True, default='', max_length=100)),
                ('output_path', models.CharField(blank=True, default='', max_length=500)),
                ('created_at', models.DateTimeField(auto_now_add=True, db_index=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
    ]
