import csv
import io
import json

from django.core.management.base import CommandError

from analysis.management.base import AnalysisCommand
from analysis.runs import JSON, dump_json, run_header, write_atomic
from analysis.serializers import CertificateSerializer
from anosov.shadowing import DensityNotAchieved, ToralAuto, theorem_a_certificate


def _matrix(value):
    try:
        entries = [int(v) for v in value.split(',')]
    except ValueError:
        raise CommandError(f'Bad matrix {value!r}; expected a,b,c,d integers', returncode=2)
    if len(entries) != 4:
        raise CommandError(f'Bad matrix {value!r}; expected four entries', returncode=2)
    return entries


class Command(AnalysisCommand):
    help = 'Certify an eps-dense true orbit of a hyperbolic toral automorphism from its fattened relation'
    command_name = 'anosov'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--matrix', default='2,1,1,1', help='Integer entries a,b,c,d')
        parser.add_argument('--grid', type=int, default=64, help='Cells per side of the torus grid')
        parser.add_argument('--delta', type=float, required=True)
        parser.add_argument('--eps', type=float, required=True)
        parser.add_argument('--steps', type=int, help='Check density on this many shadow steps only')
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--csv', dest='csv_path', help='Also write k, x, y, distance per step')

    def build_config(self, options):
        if options['grid'] < 1:
            raise CommandError('--grid must be positive.', returncode=2)
        if options['delta'] <= 0 or options['eps'] <= 0:
            raise CommandError('--delta and --eps must be positive.', returncode=2)
        return self.make_config(
            options, [], fmt=JSON, seed=options['seed'],
            matrix=_matrix(options['matrix']),
            grid=options['grid'],
            delta=options['delta'],
            eps=options['eps'],
            steps=options.get('steps'),
            csv=options.get('csv_path'),
        )

    def execute_run(self, config, hashes):
        opts = config.options
        header = run_header(config, hashes, 'anosov')
        auto = ToralAuto.from_matrix(opts['matrix'])
        try:
            certificate = theorem_a_certificate(
                auto, opts['grid'], opts['delta'], opts['eps'], opts['steps'], config.seed,
            )
        except DensityNotAchieved as e:
            e.artifact = self._render(header, auto, e.report, opts['csv'])
            raise
        return self._render(header, auto, certificate, opts['csv'])

    def _render(self, header, auto, certificate, csv_path):
        if csv_path:
            self._write_csv(csv_path, header, certificate.shadow)
        document = {'run': header, **CertificateSerializer(certificate).data}
        document['automorphism'] = auto.to_dict()
        return dump_json(document)

    def _write_csv(self, path, header, result):
        buffer = io.StringIO()
        buffer.write(f'# {json.dumps(header, sort_keys=True)}\n')
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(['k', 'x', 'y', 'distance'])
        for k, ((x, y), distance) in enumerate(zip(result.points.tolist(), result.per_step_distance)):
            writer.writerow([k, repr(x), repr(y), repr(distance)])
        write_atomic(path, buffer.getvalue().encode())
