import json
import logging

from django.core.management.base import CommandError

from analysis.management.base import AnalysisCommand
from analysis.runs import run_header
from cells.codec import BINARY, FORMATS, JSON, graph_to_bytes
from cells.serializers import BuildSpecSerializer, validated
from cells.svmap import explicit_graph, fatten

logger = logging.getLogger(__name__)


class Command(AnalysisCommand):
    help = 'Build a transition graph from a space plus a base map and epsilon, or explicit rows'
    command_name = 'build'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('spec', help='Build spec JSON: {"space", "map", "epsilon"} or {"space", "rows"}')
        parser.add_argument('--format', dest='fmt', choices=FORMATS, default=JSON)

    def build_config(self, options):
        if options['fmt'] == BINARY and not options.get('output'):
            raise CommandError('Binary graphs need --output.', returncode=2)
        return self.make_config(options, [options['spec']], fmt=options['fmt'])

    def execute_run(self, config, hashes):
        with open(config.inputs[0], 'rb') as f:
            data = json.loads(f.read())
        attrs = validated(BuildSpecSerializer, data, 'build spec')
        space = attrs['space']['space']
        if 'rows' in attrs:
            graph = explicit_graph(space, attrs['rows'])
        else:
            graph = fatten(space, attrs['map']['base'], attrs['epsilon'])
        logger.info('Built %r', graph)

        header = run_header(config, hashes, 'graph_binary' if config.fmt == BINARY else 'graph')
        if config.fmt == BINARY:
            return graph_to_bytes(graph, run=header)
        document = graph.to_dict()
        document['run'] = header
        return (json.dumps(document, sort_keys=True, separators=(',', ':')) + '\n').encode()
