import logging

import numpy as np
from django.core.management.base import CommandError

from analysis import corpus
from analysis.management.base import AnalysisCommand
from analysis.oracle import (
    MIXING_ORACLE_MAX_CELLS, OracleDisagreement, check_graph, random_explicit_graph,
)
from analysis.runs import JSON, dump_json, run_header
from analysis.serializers import OracleReportSerializer
from cells.codec import read_graph

logger = logging.getLogger(__name__)


class Command(AnalysisCommand):
    help = 'Compare recurrence and spectral results against brute-force definitions'
    command_name = 'oracle_check'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('graphs', nargs='*', help='Graph files to check')
        parser.add_argument('--corpus', action='store_true', help='Also check every bundled graph')
        parser.add_argument('--random', type=int, default=0, help='Number of seeded random graphs')
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument(
            '--max-cells', type=int, default=MIXING_ORACLE_MAX_CELLS, dest='max_cells',
            help='Largest random graph',
        )

    def build_config(self, options):
        inputs = list(options['graphs'])
        if options['corpus']:
            inputs.extend(str(path) for path in corpus.graph_paths())
        if not inputs and not options['random']:
            raise CommandError('Nothing to check: pass graph files, --corpus or --random N.', returncode=2)
        if options['random'] < 0 or options['max_cells'] < 1:
            raise CommandError('--random and --max-cells must be non-negative and positive.', returncode=2)
        return self.make_config(
            options, inputs, fmt=JSON, seed=options['seed'],
            random=options['random'], max_cells=options['max_cells'],
        )

    def execute_run(self, config, hashes):
        header = run_header(config, hashes, 'oracle')
        reports = [check_graph(read_graph(path), str(path)) for path in config.inputs]

        rng = np.random.default_rng(config.seed)
        for k in range(config.options['random']):
            graph = random_explicit_graph(rng, config.options['max_cells'])
            reports.append(check_graph(graph, f'random:{config.seed}:{k}'))

        agree = all(report.agree for report in reports)
        logger.info('Checked %d graphs, %s', len(reports), 'all agree' if agree else 'disagreements found')
        artifact = dump_json({
            'run': header,
            'agree': agree,
            'reports': OracleReportSerializer(reports, many=True).data,
        })
        if not agree:
            error = OracleDisagreement([r.source for r in reports if not r.agree])
            error.artifact = artifact
            raise error
        return artifact
