from analysis.management.base import AnalysisCommand
from analysis.recurrence import condense, final_classes, final_recurrent_set, recurrent_set
from analysis.rendering import condensation_dot, decomposition_dot
from analysis.runs import DOT, JSON, dump_json, run_header
from analysis.serializers import DecompositionSerializer
from analysis.spectral import decompose
from cells.codec import read_graph


class Command(AnalysisCommand):
    help = 'Recurrent set, final recurrent set and final classes of a transition graph'
    command_name = 'decompose'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('graph', help='Graph file, JSON or SVMG1 binary')
        parser.add_argument(
            '--full', action='store_true',
            help='Split final classes into cyclic components with periods and mixing flags',
        )
        parser.add_argument('--dot', action='store_true', help='Emit Graphviz DOT instead of JSON')

    def build_config(self, options):
        return self.make_config(
            options, [options['graph']], fmt=DOT if options['dot'] else JSON, full=options['full'],
        )

    def execute_run(self, config, hashes):
        graph = read_graph(config.inputs[0])
        header = run_header(config, hashes, 'decompose')
        condensation = condense(graph)
        full = config.options['full']
        decomposition = decompose(graph) if full else None

        if config.fmt == DOT:
            if full:
                return decomposition_dot(decomposition, header).encode()
            return condensation_dot(condensation, header).encode()

        document = {
            'run': header,
            'graph_id': graph.graph_id,
            'omega': recurrent_set(condensation).to_list(),
            'omega_final': final_recurrent_set(condensation).to_list(),
        }
        if full:
            document['classes'] = DecompositionSerializer(decomposition).data['classes']
        else:
            document['classes'] = [cls.to_list() for cls in final_classes(condensation)]
        return dump_json(document)
