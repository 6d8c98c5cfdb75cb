import csv
import io
import json

from django.core.management.base import CommandError

from analysis.entropy import METHODS, entropy_report, theorem_c_study
from analysis.management.base import AnalysisCommand
from analysis.recurrence import condense, final_classes
from analysis.runs import JSON, dump_json, run_header, write_atomic
from analysis.serializers import EntropyReportSerializer, TheoremCStudySerializer
from cells.codec import read_graph
from cells.errors import SchemaError
from cells.serializers import BaseMapSerializer, validated

THEOREM_C = 'theoremc'


def _subdivisions(value):
    try:
        counts = [int(v) for v in value.split(',') if v.strip()]
    except ValueError:
        raise CommandError(f'Bad subdivision list: {value!r}', returncode=2)
    if not counts or min(counts) < 1:
        raise CommandError('Subdivision counts must be positive.', returncode=2)
    return counts


class Command(AnalysisCommand):
    help = 'Entropy of a transition graph by path counts, spectral radius or metric brackets'
    command_name = 'entropy'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('input', help='Graph file, or a base map JSON for --method theoremc')
        parser.add_argument('--method', choices=METHODS + [THEOREM_C], default='count')
        parser.add_argument('--n', type=int, default=8, help='Sequence length (count, separated, spanning)')
        parser.add_argument('--eps', type=float, help='Metric resolution, or fattening radius for theoremc')
        parser.add_argument('--budget', type=int, help='Cap on enumerated sequences')
        parser.add_argument('--subdivisions', default='20,40,80,160', help='Comma-separated cell counts')
        parser.add_argument(
            '--final-class', type=int, dest='final_class',
            help='Restrict to the final class with this index',
        )
        parser.add_argument('--csv', dest='csv_path', help='Also write the (n, value) table as CSV')

    def build_config(self, options):
        method = options['method']
        if options['n'] < 1:
            raise CommandError('--n must be at least 1.', returncode=2)
        if method in ('separated', 'spanning', THEOREM_C) and not options.get('eps'):
            raise CommandError(f'--eps is required for --method {method}.', returncode=2)
        extra = {
            'method': method,
            'n': options['n'],
            'eps': options.get('eps'),
            'budget': options.get('budget'),
            'final_class': options.get('final_class'),
            'csv': options.get('csv_path'),
        }
        if method == THEOREM_C:
            extra['subdivisions'] = _subdivisions(options['subdivisions'])
        return self.make_config(options, [options['input']], fmt=JSON, **extra)

    def execute_run(self, config, hashes):
        opts = config.options
        header = run_header(config, hashes, 'entropy')
        if opts['method'] == THEOREM_C:
            return self._theorem_c(config, header)

        graph = read_graph(config.inputs[0])
        domain = None
        if opts['final_class'] is not None:
            classes = final_classes(condense(graph))
            if not 0 <= opts['final_class'] < len(classes):
                raise SchemaError(
                    f'--final-class {opts["final_class"]} out of range; graph has {len(classes)} classes'
                )
            domain = classes[opts['final_class']]

        report = entropy_report(
            graph, opts['method'], opts['n'], opts['eps'], opts['budget'], domain,
        )
        data = EntropyReportSerializer(report).data
        if opts['csv']:
            steps = range(1, len(data['values']) + 1)
            self._write_csv(opts['csv'], header, ['n', 'value'], zip(steps, data['values']))
        return dump_json({'run': header, **data})

    def _theorem_c(self, config, header):
        opts = config.options
        with open(config.inputs[0], 'rb') as f:
            data = json.loads(f.read())
        base = validated(BaseMapSerializer, data.get('map', data), 'base map')['base']
        study = theorem_c_study(base, opts['eps'], opts['subdivisions'])
        data = TheoremCStudySerializer(study).data
        if opts['csv']:
            columns = ['subdivisions', 'min_row_size', 'm', 'log_m', 'growth_rate', 'epsilon0']
            rows = ([row[c] for c in columns] for row in data['rows'])
            self._write_csv(opts['csv'], header, columns, rows)
        return dump_json({'run': header, **data})

    def _write_csv(self, path, header, columns, rows):
        buffer = io.StringIO()
        buffer.write(f'# {json.dumps(header, sort_keys=True)}\n')
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(columns)
        writer.writerows(rows)
        write_atomic(path, buffer.getvalue().encode())
