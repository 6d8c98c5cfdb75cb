"""Run plumbing shared by the management commands.

Every artifact carries a run header with the schema version, the full run
configuration and a content hash of each input, so identical inputs and
config give byte-identical outputs.
"""

import hashlib
import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field

from django.conf import settings

logger = logging.getLogger(__name__)

JSON = 'json'
DOT = 'dot'
CSV = 'csv'
BINARY = 'binary'


@dataclass
class RunConfig:
    command: str
    inputs: list = field(default_factory=list)
    output: str = None
    fmt: str = JSON
    seed: int = None
    options: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


def input_hashes(config):
    return {path: sha256_file(path) for path in config.inputs}


def run_header(config, hashes, schema):
    return {
        'schema': settings.SCHEMA_VERSIONS[schema],
        'config': config.to_dict(),
        'input_sha256': hashes,
    }


def dump_json(document):
    return (json.dumps(document, sort_keys=True, indent=2, allow_nan=False) + '\n').encode()


def write_atomic(path, data):
    """Write bytes to path via a temp file in the same directory and a rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.tmp-', suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_path, path)
    except BaseException:
        try:
            os.unlink(tmp_path)
        except OSError:
            pass
        raise


def record_run(config, status='completed', error_name='', hashes=None):
    """Store an AnalysisRun entry; failures only log a warning."""
    if not getattr(settings, 'RECORD_RUNS', True):
        return None
    from .models import AnalysisRun

    try:
        return AnalysisRun.objects.create(
            command=config.command,
            config=config.to_dict(),
            input_sha256=hashes or {},
            status=status,
            error_name=error_name,
            output_path=config.output or '',
        )
    except Exception:
        logger.warning('Failed to record %s run', config.command, exc_info=True)
        return None
