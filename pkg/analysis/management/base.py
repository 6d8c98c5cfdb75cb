import json
import logging

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from cells.errors import DomainError, SchemaError

from ..runs import RunConfig, input_hashes, record_run, write_atomic

logger = logging.getLogger(__name__)

DOMAIN_EXIT = 1
IO_EXIT = 2


class AnalysisCommand(BaseCommand):
    """Base for the analysis commands.

    Subclasses implement ``build_config`` and ``execute_run``; the latter
    returns the artifact bytes. Domain errors exit with status 1 and I/O or
    schema errors with status 2, the error class name leading the message.
    """

    command_name = None

    def get_version(self):
        return json.dumps(settings.SCHEMA_VERSIONS, sort_keys=True)

    def add_arguments(self, parser):
        parser.add_argument('-o', '--output', help='Write the artifact here instead of stdout.')

    def build_config(self, options):
        raise NotImplementedError

    def execute_run(self, config, hashes):
        raise NotImplementedError

    def handle(self, *args, **options):
        config = self.build_config(options)
        hashes = {}
        try:
            hashes = input_hashes(config)
            artifact = self.execute_run(config, hashes)
        except DomainError as e:
            # Some domain errors still carry a report worth writing
            if getattr(e, 'artifact', None) is not None:
                self.emit(config, e.artifact)
            self.fail(config, hashes, e, 'domain_error', DOMAIN_EXIT)
        except (SchemaError, OSError, json.JSONDecodeError, UnicodeDecodeError) as e:
            self.fail(config, hashes, e, 'io_error', IO_EXIT)
        try:
            self.emit(config, artifact)
        except OSError as e:
            self.fail(config, hashes, e, 'io_error', IO_EXIT)
        record_run(config, 'completed', '', hashes)
        logger.info('%s finished', config.command)

    def emit(self, config, artifact):
        if config.output:
            write_atomic(config.output, artifact)
        else:
            self.stdout.write(artifact.decode(), ending='')

    def fail(self, config, hashes, error, status, returncode):
        name = type(error).__name__
        record_run(config, status, name, hashes)
        raise CommandError(f'{name}: {error}', returncode=returncode)

    def make_config(self, options, inputs, fmt='json', seed=None, **extra):
        return RunConfig(
            command=self.command_name,
            inputs=list(inputs),
            output=options.get('output'),
            fmt=fmt,
            seed=seed,
            options=extra,
        )
