import json
import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from laboratory import reports
from laboratory.api.serializers import CONFIG_SERIALIZERS
from laboratory.enum import Command as LabCommand
from laboratory.exceptions import LaboratoryError
from laboratory.experiments import execute
from laboratory.models import ExperimentRun

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    """Run a laboratory experiment from a JSON config."""

    help = 'Run a Liouville laboratory experiment: ' + ', '.join(LabCommand.values)

    def add_arguments(self, parser):
        parser.add_argument(
            'subcommand',
            choices=LabCommand.values,
            help='Experiment to run'
        )
        parser.add_argument(
            '--config',
            required=True,
            help='Path to the JSON experiment config'
        )
        parser.add_argument(
            '--out',
            default=None,
            help='Directory for report.json and CSV artifacts (default: report on stdout)'
        )
        parser.add_argument(
            '--seed',
            type=int,
            default=None,
            help='Override the seed in the config'
        )
        parser.add_argument(
            '--threads',
            type=int,
            default=None,
            help='Override the thread count in the config'
        )
        parser.add_argument(
            '--archive',
            action='store_true',
            help='Store the report as an ExperimentRun'
        )

    def load_config(self, path: str) -> dict:
        try:
            with open(path, encoding='utf-8') as handle:
                config = json.load(handle)
        except OSError as exc:
            raise CommandError(f"Cannot read config {path}: {exc}", returncode=2)
        except json.JSONDecodeError as exc:
            raise CommandError(f"Config {path} is not valid JSON: {exc}", returncode=2)
        if not isinstance(config, dict):
            raise CommandError("The config must be a JSON object.", returncode=2)
        return config

    def write(self, document: dict, artifacts: dict, out) -> None:
        text = reports.dumps(document)
        if out is None:
            self.stdout.write(text, ending='')
            return
        directory = Path(out)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / 'report.json').write_text(text, encoding='utf-8')
        for name, content in artifacts.items():
            (directory / name).write_text(content, encoding='utf-8')
        self.stdout.write(self.style.SUCCESS(f"Wrote report.json and {len(artifacts)} artifact(s) to {directory}"))

    def handle(self, *args, **options):
        command = options['subcommand']
        logger.info(f"lab {command} started with config {options['config']}")
        config = self.load_config(options['config'])
        for key in ('seed', 'threads'):
            if options[key] is not None:
                config[key] = options[key]

        serializer = CONFIG_SERIALIZERS[command](data=config)
        if not serializer.is_valid():
            raise CommandError(f"Invalid config: {json.dumps(serializer.errors, sort_keys=True)}", returncode=2)
        cfg = serializer.validated_data

        try:
            document, artifacts = execute(command, cfg)
        except LaboratoryError as exc:
            logger.warning(f"lab {command} failed: {exc}")
            document = reports.envelope(command, cfg, reports.error_body(exc), exc.exit_code)
            artifacts = {}

        self.write(document, artifacts, options['out'])
        if options['archive']:
            run = ExperimentRun.archive(document)
            self.stdout.write(self.style.SUCCESS(f"Archived run {run.id}"))

        exit_code = document['exit_code']
        logger.info(f"lab {command} finished with exit code {exit_code}")
        if exit_code:
            raise CommandError(f"lab {command} finished with exit code {exit_code}", returncode=exit_code)
