import uuid

import django_extensions.db.fields
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('created', django_extensions.db.fields.CreationDateTimeField(auto_now_add=True, verbose_name='created')),
                ('modified', django_extensions.db.fields.ModificationDateTimeField(auto_now=True, verbose_name='modified')),
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False, unique=True)),
                ('metadata', models.JSONField(blank=True, default=dict, help_text='Stores additional metadata in JSON format.', null=True)),
                ('command', models.CharField(choices=[('check-frame', 'Check frame'), ('surface-factor', 'Surface factor'), ('criterion', 'Criterion'), ('solve', 'Dirichlet solve'), ('dichotomy', 'Dichotomy'), ('barrier', 'Barrier')], db_index=True, max_length=32)),
                ('status', models.CharField(choices=[('passed', 'Passed'), ('failed', 'Failed'), ('error', 'Error')], db_index=True, max_length=16)),
                ('exit_code', models.PositiveSmallIntegerField(default=0)),
                ('seed', models.BigIntegerField(blank=True, null=True)),
                ('config', models.JSONField(default=dict, help_text='Resolved experiment configuration.')),
                ('report', models.JSONField(default=dict, help_text='Full report envelope.')),
                ('version', models.CharField(max_length=32)),
            ],
            options={
                'ordering': ['-created'],
                'indexes': [models.Index(fields=['command', 'status'], name='lab_run_command_status_idx'), models.Index(fields=['created'], name='lab_run_created_idx')],
            },
        ),
    ]
