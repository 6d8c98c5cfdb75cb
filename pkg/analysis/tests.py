import csv
import json
import math
import os
import tempfile
from io import StringIO
from unittest.mock import patch

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, override_settings

from analysis import corpus
from analysis.entropy import (
    BudgetExceeded, RegionTooSmall, count_orbits, count_series, entropy_report,
    growth_rate, growth_rate_estimate, separated_lower, separation_radius,
    spanning_upper, theorem_c_study,
)
from analysis.models import AnalysisRun
from analysis.oracle import TooLargeForOracle, check_graph, random_explicit_graph
from analysis.recurrence import (
    InvarianceViolation, condense, final_classes, final_recurrent_set, reaches,
    recurrent_set,
)
from analysis.runs import RunConfig, record_run, write_atomic
from analysis.spectral import (
    NotStronglyConnected, decompose, decomposition_violations, is_mixing,
    is_transitive, period, return_time,
)
from cells.cellspace import CellSet, SpaceMismatch, interval, interval_union, torus2
from cells.codec import graph_to_bytes
from cells.svmap import (
    AFFINE, DOUBLING, IDENTITY, LOGISTIC, TORAL, BaseMap, explicit_graph, fatten, forward_orbit,
    image,
)

GOLDEN_MEAN = (1 + math.sqrt(5)) / 2


def _graph(rows):
    return explicit_graph(interval(0, 1, len(rows)), rows)


def _cells(graph, ids):
    return CellSet.from_ids(graph.space, ids)


class RecurrenceTests(SimpleTestCase):
    def test_swap_is_one_nontrivial_scc(self):
        c = condense(corpus.load_graph('swap2'))
        self.assertEqual(c.n_sccs, 1)
        self.assertTrue(c.nontrivial[0])
        self.assertEqual(c.members(0).to_list(), [0, 1])

    def test_drain_graph(self):
        c = condense(corpus.load_graph('drain'))
        self.assertEqual([m.to_list() for m in c.scc_members()], [[0], [1]])
        self.assertTrue(all(c.nontrivial))
        self.assertEqual(c.dag_edges(0).tolist(), [1])
        self.assertEqual(recurrent_set(c).to_list(), [0, 1])
        self.assertEqual(final_recurrent_set(c).to_list(), [1])

    def test_identity_sccs_are_separate(self):
        c = condense(corpus.load_graph('identity3'))
        self.assertEqual(c.n_sccs, 3)
        self.assertTrue(all(c.nontrivial))
        self.assertEqual(c.dag.nnz, 0)

    def test_transient_cells_are_not_recurrent(self):
        c = condense(_graph([[1], [2], [2]]))
        self.assertEqual(recurrent_set(c).to_list(), [2])
        self.assertFalse(c.nontrivial[c.scc_of[0]])

    def test_full_relation_is_recurrent(self):
        c = condense(corpus.load_graph('full2'))
        self.assertEqual(recurrent_set(c).to_list(), [0, 1])

    def test_two_final_classes(self):
        c = condense(corpus.load_graph('two_attractors'))
        self.assertEqual(final_recurrent_set(c).to_list(), [0, 2])
        self.assertEqual([cls.to_list() for cls in final_classes(c)], [[0], [2]])

    def test_recurrent_set_larger_than_final(self):
        c = condense(corpus.load_graph('leaky_pair'))
        self.assertEqual(recurrent_set(c).to_list(), [0, 1, 2, 3])
        self.assertEqual(final_recurrent_set(c).to_list(), [2, 3])

    def test_strongly_connected_graph_has_one_class(self):
        graph = corpus.load_graph('three_cycle')
        classes = final_classes(condense(graph))
        self.assertEqual(len(classes), 1)
        self.assertEqual(classes[0], CellSet.full(graph.space))

    def test_final_classes_are_invariant(self):
        for name in corpus.graph_names():
            graph = corpus.load_graph(name)
            for cls in final_classes(condense(graph)):
                self.assertEqual(image(graph, cls), cls, name)

    def test_reaches(self):
        c = condense(corpus.load_graph('two_attractors'))
        self.assertTrue(reaches(c, 1, 2))
        self.assertTrue(reaches(c, 1, 0))
        self.assertFalse(reaches(c, 1, 1))
        self.assertFalse(reaches(c, 0, 2))
        self.assertTrue(reaches(c, 0, 0))

    def test_reaches_through_the_dag(self):
        c = condense(_graph([[1], [2], [3], [3]]))
        self.assertTrue(reaches(c, 0, 3))
        self.assertFalse(reaches(c, 3, 0))

    def test_transitive_graphs_recur_on_their_image(self):
        graphs = [
            corpus.load_graph(name)
            for name in ('full2', 'swap2', 'three_cycle', 'piece_swap', 'halves_swap', 'golden_mean')
        ]
        graphs.append(fatten(interval(0, 1, 64), BaseMap(DOUBLING), 0.02))
        for graph in graphs:
            whole = CellSet.full(graph.space)
            self.assertTrue(is_transitive(graph, whole))
            covered = image(graph, whole)
            c = condense(graph)
            self.assertEqual(recurrent_set(c), covered)
            self.assertEqual(final_recurrent_set(c), covered)
            for cell in range(graph.n_cells):
                self.assertEqual(forward_orbit(graph, _cells(graph, [cell])), covered, (graph, cell))

    def test_invariance_violation_reported(self):
        c = condense(corpus.load_graph('drain'))
        with patch('analysis.recurrence.image', return_value=_cells(c.graph, [0, 1])):
            with self.assertRaises(InvarianceViolation):
                final_classes(c)


class SpectralTests(SimpleTestCase):
    def test_swap_on_two_pieces(self):
        decomposition = decompose(corpus.load_graph('piece_swap'))
        self.assertEqual(len(decomposition.classes), 1)
        report = decomposition.classes[0]
        self.assertEqual(report.period, 2)
        self.assertEqual([c.to_list() for c in report.components], [[0, 1, 2, 3], [4, 5, 6, 7]])
        self.assertEqual(report.permutation, [1, 0])
        self.assertTrue(report.transitive)
        self.assertFalse(report.mixing)
        self.assertTrue(report.mixing_per_component)

    def test_two_final_classes_of_period_one(self):
        decomposition = decompose(corpus.load_graph('two_attractors'))
        self.assertEqual([r.period for r in decomposition.classes], [1, 1])
        self.assertEqual([len(r.components) for r in decomposition.classes], [1, 1])

    def test_fattened_doubling_is_mixing(self):
        graph = fatten(interval(0, 1, 64), BaseMap(DOUBLING), 0.02)
        decomposition = decompose(graph)
        self.assertEqual(len(decomposition.classes), 1)
        report = decomposition.classes[0]
        self.assertEqual(report.period, 1)
        self.assertTrue(report.transitive)
        self.assertTrue(report.mixing)
        self.assertEqual(decomposition_violations(graph, decomposition), [])

    @override_settings(SETVALUED_THREADS=3)
    def test_threaded_decomposition(self):
        decomposition = decompose(corpus.load_graph('two_attractors'))
        self.assertEqual([r.class_cells.to_list() for r in decomposition.classes], [[0], [2]])

    def test_decomposition_items_hold_on_corpus(self):
        for name in ('piece_swap', 'leaky_pair', 'two_attractors', 'swap2', 'full2', 'identity3', 'three_cycle'):
            graph = corpus.load_graph(name)
            self.assertEqual(decomposition_violations(graph, decompose(graph)), [], name)

    def test_transitivity(self):
        full = corpus.load_graph('full2')
        self.assertTrue(is_transitive(full, CellSet.full(full.space)))
        identity = corpus.load_graph('identity3')
        self.assertFalse(is_transitive(identity, CellSet.full(identity.space)))
        attractors = corpus.load_graph('two_attractors')
        self.assertFalse(is_transitive(attractors, CellSet.full(attractors.space)))
        self.assertTrue(is_transitive(attractors, _cells(attractors, [0])))

    def test_wider_fattening_stays_transitive(self):
        space = interval(0, 1, 32)
        narrow = fatten(space, BaseMap(DOUBLING), 0.02)
        wide = fatten(space, BaseMap(DOUBLING), 0.08)
        whole = CellSet.full(space)
        self.assertTrue(is_transitive(narrow, whole))
        for cell in range(space.n_cells):
            self.assertTrue(narrow.row_set(cell).issubset(wide.row_set(cell)))
        self.assertTrue(is_transitive(wide, whole))

    def test_period(self):
        swap = corpus.load_graph('swap2')
        self.assertEqual(period(swap, CellSet.full(swap.space)), 2)
        full = corpus.load_graph('full2')
        self.assertEqual(period(full, CellSet.full(full.space)), 1)
        cycle = corpus.load_graph('three_cycle')
        self.assertEqual(period(cycle, CellSet.full(cycle.space)), 3)

    def test_period_needs_strong_connectivity(self):
        identity = corpus.load_graph('identity3')
        with self.assertRaises(NotStronglyConnected):
            period(identity, CellSet.full(identity.space))

    def test_mixing(self):
        swap = corpus.load_graph('swap2')
        self.assertFalse(is_mixing(swap, CellSet.full(swap.space)))
        halves = corpus.load_graph('halves_swap')
        whole = CellSet.full(halves.space)
        self.assertTrue(is_transitive(halves, whole))
        self.assertFalse(is_mixing(halves, whole))
        identity = fatten(interval(0, 1, 16), BaseMap(IDENTITY), 0.2)
        self.assertTrue(is_mixing(identity, CellSet.full(identity.space)))

    def test_return_time(self):
        swap = corpus.load_graph('swap2')
        self.assertEqual(return_time(swap, _cells(swap, [0])), 2)
        full = corpus.load_graph('full2')
        self.assertEqual(return_time(full, CellSet.full(full.space)), 1)
        cycle = corpus.load_graph('three_cycle')
        self.assertEqual(return_time(cycle, _cells(cycle, [1])), 3)

    def test_period_divides_return_times(self):
        graph = corpus.load_graph('piece_swap')
        whole = CellSet.full(graph.space)
        n = period(graph, whole)
        for cell in range(graph.n_cells):
            self.assertEqual(return_time(graph, _cells(graph, [cell])) % n, 0)

    def test_transitive_fattening_on_connected_space_has_period_one(self):
        cases = [
            (interval(0, 1, 64), BaseMap(DOUBLING), 0.02),
            (interval(0, 1, 16), BaseMap(IDENTITY), 0.2),
            (torus2(16, 16), BaseMap(TORAL, {'matrix': [[2, 1], [1, 1]]}), 0.05),
        ]
        for space, base, eps in cases:
            graph = fatten(space, base, eps)
            whole = CellSet.full(space)
            self.assertTrue(is_transitive(graph, whole), base)
            self.assertEqual(period(graph, whole), 1, base)
            self.assertTrue(is_mixing(graph, whole), base)

    def test_swapped_pieces_give_one_component_per_step_of_the_cycle(self):
        space = interval_union([(0, 1), (3, 4)], [8, 8])
        graph = fatten(space, BaseMap(AFFINE, {'slope': -1.0, 'intercept': 4.0}), 0.3)
        self.assertEqual(period(graph, CellSet.full(space)), 2)
        [report] = decompose(graph).classes
        self.assertEqual(report.period, 2)
        self.assertEqual([c.to_list() for c in report.components], [list(range(8)), list(range(8, 16))])
        self.assertFalse(report.mixing)
        self.assertTrue(report.mixing_per_component)
        for component in report.components:
            self.assertTrue(is_mixing(graph.power(2), component))


class FattenedDecompositionTests(SimpleTestCase):
    """Every final class of a fattened map is permuted cyclically and mixes under f^n."""

    def _assert_clean(self, space, base, widths):
        cell = space.cell_size
        for k in widths:
            graph = fatten(space, base, k * cell)
            decomposition = decompose(graph)
            self.assertTrue(decomposition.classes, (base, k))
            self.assertEqual(decomposition_violations(graph, decomposition), [], (base, k))

    def test_identity(self):
        self._assert_clean(interval(0, 1, 64), BaseMap(IDENTITY), (1, 2, 4))

    def test_doubling(self):
        for n in (64, 128):
            self._assert_clean(interval(0, 1, n), BaseMap(DOUBLING), (1, 2, 4))

    def test_logistic(self):
        for a in (3.6, 3.9):
            self._assert_clean(interval(0, 1, 128), BaseMap(LOGISTIC, {'a': a}), (1, 2, 4))

    def test_cat_map(self):
        base = BaseMap(TORAL, {'matrix': [[2, 1], [1, 1]]})
        self._assert_clean(torus2(32, 32), base, (1, 2, 4))

    def test_cat_map_on_a_finer_grid(self):
        base = BaseMap(TORAL, {'matrix': [[2, 1], [1, 1]]})
        self._assert_clean(torus2(64, 64), base, (1,))


class PathCountTests(SimpleTestCase):
    def test_full_relation_doubles(self):
        self.assertEqual(count_series(corpus.load_graph('full2'), 5), [2, 4, 8, 16, 32])

    def test_identity_stays_constant(self):
        graph = corpus.load_graph('identity3')
        self.assertEqual(count_series(graph, 7), [3] * 7)

    def test_golden_mean(self):
        self.assertEqual(count_orbits(corpus.load_graph('golden_mean'), 6), 21)

    def test_counts_are_exact_big_integers(self):
        count = count_orbits(corpus.load_graph('full2'), 200)
        self.assertEqual(count, 2 ** 200)

    def test_domain_restriction(self):
        graph = corpus.load_graph('leaky_pair')
        self.assertEqual(count_series(graph, 3, _cells(graph, [2, 3])), [2, 4, 8])

    def test_length_must_be_positive(self):
        with self.assertRaises(ValueError):
            count_series(corpus.load_graph('full2'), 0)


class GrowthRateTests(SimpleTestCase):
    def test_full_relation(self):
        for m in (2, 3, 5):
            graph = explicit_graph(interval(0, 1, m), [list(range(m))] * m)
            self.assertAlmostEqual(growth_rate(graph), math.log(m), delta=1e-9)

    def test_golden_mean(self):
        self.assertAlmostEqual(
            growth_rate(corpus.load_graph('golden_mean')), math.log(GOLDEN_MEAN), delta=1e-6,
        )

    def test_identity_has_zero_entropy(self):
        self.assertAlmostEqual(growth_rate(corpus.load_graph('identity3')), 0.0, delta=1e-9)

    def test_acyclic_part_ignored(self):
        graph = _graph([[1], [2], [2]])
        self.assertAlmostEqual(growth_rate(graph), 0.0, delta=1e-9)

    def test_path_counts_approach_growth_rate(self):
        for name in ('full2', 'golden_mean', 'identity3', 'swap2', 'three_cycle', 'piece_swap'):
            graph = corpus.load_graph(name)
            gap = math.log(count_orbits(graph, 64)) / 64 - growth_rate(graph)
            self.assertLess(abs(gap), 0.05, name)

    def test_rate_lies_between_log_row_sizes(self):
        graphs = [
            corpus.load_graph(name)
            for name in ('full2', 'swap2', 'three_cycle', 'piece_swap', 'halves_swap', 'golden_mean')
        ]
        graphs.append(fatten(interval(0, 1, 64), BaseMap(DOUBLING), 0.02))
        graphs.append(fatten(interval(0, 1, 16), BaseMap(IDENTITY), 0.2))
        for graph in graphs:
            sizes = graph.row_sizes
            rate = growth_rate(graph)
            self.assertGreaterEqual(rate, math.log(sizes.min()) - 1e-6, graph)
            self.assertLessEqual(rate, math.log(sizes.max()) + 1e-6, graph)

    @override_settings(GROWTH_RATE_MAX_ITERATIONS=1)
    def test_unconverged_iteration_falls_back_to_counts(self):
        rate, converged = growth_rate_estimate(corpus.load_graph('golden_mean'))
        self.assertFalse(converged)
        self.assertAlmostEqual(rate, math.log(GOLDEN_MEAN), delta=1e-3)


class MetricBracketTests(SimpleTestCase):
    def test_separated_full_relation(self):
        graph = corpus.load_graph('full2')
        self.assertEqual(separated_lower(graph, graph.space, 4, 0.3), 16)

    def test_separated_large_epsilon(self):
        graph = corpus.load_graph('golden_mean')
        self.assertEqual(separated_lower(graph, graph.space, 3, 5.0), 1)

    def test_separated_golden_mean_matches_counts(self):
        graph = corpus.load_graph('golden_mean')
        self.assertEqual(separated_lower(graph, graph.space, 6, 0.3), 21)

    def test_spanning(self):
        identity = corpus.load_graph('identity3')
        self.assertEqual(spanning_upper(identity, identity.space, 4, 0.5), 3)
        full = corpus.load_graph('full2')
        self.assertEqual(spanning_upper(full, full.space, 3, 0.1), 8)
        self.assertEqual(spanning_upper(full, full.space, 3, 5.0), 1)

    def test_spanning_centre_covers_its_neighbours(self):
        # Centers 1/6, 1/2, 5/6: the middle one is within 0.4 of both others
        graph = _graph([[0], [1], [2]])
        self.assertEqual(spanning_upper(graph, graph.space, 1, 0.4), 1)
        self.assertEqual(separated_lower(graph, graph.space, 1, 0.4), 2)
        self.assertEqual(separated_lower(graph, graph.space, 1, 0.8), 1)

    def test_spanning_on_torus(self):
        graph = fatten(torus2(4, 4), BaseMap(TORAL, {'matrix': [[2, 1], [1, 1]]}), 0.1)
        upper = spanning_upper(graph, graph.space, 2, 0.3)
        self.assertGreaterEqual(upper, separated_lower(graph, graph.space, 2, 0.6))
        self.assertLessEqual(upper, count_orbits(graph, 2))

    def test_spanning_budget(self):
        graph = corpus.load_graph('full2')
        with self.assertRaises(BudgetExceeded) as ctx:
            spanning_upper(graph, graph.space, 10, 0.3, budget=100)
        self.assertEqual(ctx.exception.partial, 100)

    def test_brackets_bound_path_counts(self):
        graph = fatten(interval(0, 1, 8), BaseMap(DOUBLING), 0.05)
        for n in (1, 2, 3):
            lower = separated_lower(graph, graph.space, n, 0.2)
            upper = spanning_upper(graph, graph.space, n, 0.2)
            self.assertLessEqual(lower, count_orbits(graph, n))
            self.assertLessEqual(upper, count_orbits(graph, n))
            self.assertGreaterEqual(lower, 1)

    def test_brackets_consistent_on_corpus(self):
        for name in corpus.graph_names():
            graph = corpus.load_graph(name)
            for eps in (0.1, 0.3, 0.6):
                for n in range(1, 6):
                    wide = separated_lower(graph, graph.space, n, 2 * eps)
                    self.assertLessEqual(wide, spanning_upper(graph, graph.space, n, eps), (name, eps, n))
                    lower = separated_lower(graph, graph.space, n, eps)
                    self.assertLessEqual(lower, count_orbits(graph, n), (name, eps, n))

    def test_budget(self):
        graph = corpus.load_graph('full2')
        with self.assertRaises(BudgetExceeded) as ctx:
            separated_lower(graph, graph.space, 10, 0.3, budget=100)
        self.assertEqual(ctx.exception.budget, 100)

    def test_space_mismatch(self):
        graph = corpus.load_graph('full2')
        with self.assertRaises(SpaceMismatch):
            separated_lower(graph, interval(0, 1, 3), 2, 0.3)

    def test_report_rate(self):
        report = entropy_report(corpus.load_graph('full2'), 'count', 5)
        self.assertEqual(report.values, [2, 4, 8, 16, 32])
        self.assertAlmostEqual(report.rate, math.log(2))


class SeparationRadiusTests(SimpleTestCase):
    def setUp(self):
        self.space = interval(0, 1, 10)
        self.region = CellSet.full(self.space)

    def test_two_points_far_apart(self):
        result = separation_radius(self.space, self.region, 2)
        self.assertEqual(result.cells, [0, 9])
        self.assertGreaterEqual(result.epsilon0, 0.3)
        self.assertTrue(result.meets_target)

    def test_single_point(self):
        result = separation_radius(self.space, self.region, 1)
        self.assertEqual(len(result.cells), 1)
        self.assertAlmostEqual(result.epsilon0, 0.45)

    def test_every_cell(self):
        result = separation_radius(self.space, self.region, 10)
        self.assertEqual(result.cells, list(range(10)))
        self.assertAlmostEqual(result.epsilon0, 0.1)

    def test_region_too_small(self):
        with self.assertRaises(RegionTooSmall):
            separation_radius(self.space, CellSet.from_ids(self.space, [1, 2]), 3)

    def test_picked_cells_are_strictly_farther_than_epsilon0(self):
        for m in (2, 3, 5, 10):
            result = separation_radius(self.space, self.region, m)
            distances = self.space.center_distances(result.cells, result.cells)
            self.assertTrue(np.all(distances[~np.eye(m, dtype=bool)] > result.epsilon0), m)

    def test_two_points_in_connected_regions(self):
        block = CellSet.from_ids(self.space, [3, 4, 5, 6])
        result = separation_radius(self.space, block, 2)
        self.assertEqual(result.cells, [3, 6])
        self.assertTrue(result.meets_target)
        torus = torus2(8, 8)
        result = separation_radius(torus, CellSet.full(torus), 2)
        self.assertEqual(len(result.cells), 2)
        self.assertTrue(result.meets_target)
        self.assertAlmostEqual(result.epsilon0, 0.5)


class TheoremCStudyTests(SimpleTestCase):
    def test_identity_growth_dominates_log_m(self):
        study = theorem_c_study(BaseMap(IDENTITY), 0.1, [20, 40, 80, 160])
        rates = [row.growth_rate for row in study.rows]
        for coarse, fine in zip(rates, rates[1:]):
            self.assertLess(coarse, fine)
        for row in study.rows:
            self.assertGreaterEqual(row.m, 2)
            self.assertGreaterEqual(row.growth_rate, row.log_m)
        self.assertLess(study.rows[0].m, study.rows[-1].m)
        for row, floor in zip(study.rows, (2, 4, 8)):
            self.assertGreater(row.growth_rate, math.log(floor))

    def test_full_relation_when_epsilon_covers_everything(self):
        study = theorem_c_study(BaseMap(IDENTITY), 1.0, [10])
        row = study.rows[0]
        self.assertEqual(row.min_row_size, 10)
        self.assertAlmostEqual(row.growth_rate, math.log(10), delta=1e-9)

    def test_doubling_growth_increases(self):
        study = theorem_c_study(BaseMap(DOUBLING), 0.05, [32, 64, 128])
        rates = [row.growth_rate for row in study.rows]
        self.assertTrue(all(a < b for a, b in zip(rates, rates[1:])), rates)


class OracleTests(SimpleTestCase):
    def test_corpus_agrees(self):
        for path in corpus.graph_paths():
            report = check_graph(corpus.load_graph(path.stem), path.stem)
            self.assertTrue(report.agree, (path.stem, report.disagreements()))

    def test_random_graphs_agree(self):
        rng = np.random.default_rng(2024)
        for k in range(50):
            graph = random_explicit_graph(rng, 12)
            self.assertLessEqual(graph.n_cells, 12)
            report = check_graph(graph, f'random {k}')
            self.assertTrue(report.agree, (graph.rows(), report.disagreements()))

    def test_too_large(self):
        n = 501
        graph = explicit_graph(interval(0, 1, n), [[(c + 1) % n] for c in range(n)])
        with self.assertRaises(TooLargeForOracle):
            check_graph(graph)


class RunPlumbingTests(TestCase):
    def test_write_atomic_replaces_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'out.json')
            write_atomic(path, b'first')
            write_atomic(path, b'second')
            with open(path, 'rb') as f:
                self.assertEqual(f.read(), b'second')
            self.assertEqual(os.listdir(tmp), ['out.json'])

    def test_record_run(self):
        run = record_run(RunConfig('decompose', ['g.json']), 'completed', '', {'g.json': 'abc'})
        self.assertEqual(AnalysisRun.objects.get().pk, run.pk)
        self.assertEqual(run.config['inputs'], ['g.json'])

    @override_settings(RECORD_RUNS=False)
    def test_recording_disabled(self):
        self.assertIsNone(record_run(RunConfig('decompose')))
        self.assertEqual(AnalysisRun.objects.count(), 0)

    def test_recording_failure_only_logs(self):
        with patch('analysis.models.AnalysisRun.objects.create', side_effect=RuntimeError('db down')):
            with self.assertLogs('analysis.runs', level='WARNING'):
                self.assertIsNone(record_run(RunConfig('decompose')))


class DecomposeCommandTests(TestCase):
    def _run(self, *args, **kwargs):
        out = StringIO()
        call_command('decompose', *args, stdout=out, **kwargs)
        return out.getvalue()

    def test_two_classes(self):
        data = json.loads(self._run(str(corpus.CORPUS_DIR / 'two_attractors.json')))
        self.assertEqual(data['classes'], [[0], [2]])
        self.assertEqual(data['omega'], [0, 2])
        self.assertEqual(data['omega_final'], [0, 2])
        self.assertEqual(data['run']['schema'], 'setvalued.decompose.v1')
        self.assertEqual(AnalysisRun.objects.get().command, 'decompose')

    def test_full_decomposition(self):
        data = json.loads(self._run(str(corpus.CORPUS_DIR / 'piece_swap.json'), full=True))
        [cls] = data['classes']
        self.assertEqual(cls['period'], 2)
        self.assertEqual(cls['components'], [[0, 1, 2, 3], [4, 5, 6, 7]])
        self.assertTrue(cls['component_mixing'])
        self.assertFalse(cls['mixing'])

    def test_output_is_reproducible(self):
        path = str(corpus.CORPUS_DIR / 'leaky_pair.json')
        self.assertEqual(self._run(path, full=True), self._run(path, full=True))

    def test_dot_output(self):
        text = self._run(str(corpus.CORPUS_DIR / 'leaky_pair.json'), dot=True)
        self.assertTrue(text.startswith('// {'))
        self.assertIn('digraph condensation', text)
        self.assertIn('s0 -> s1', text)

    def test_dot_decomposition(self):
        text = self._run(str(corpus.CORPUS_DIR / 'piece_swap.json'), dot=True, full=True)
        self.assertIn('period 2', text)
        self.assertIn('c0_0 -> c0_1', text)

    def test_unsorted_binary_row_exits_with_schema_error(self):
        blob = graph_to_bytes(_graph([[0, 1], [0]]))
        # Swap row 0 to [1, 0]
        blob = blob[:-12] + np.array([1, 0, 0], dtype='<u4').tobytes()
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'unsorted.svmg')
            with open(path, 'wb') as f:
                f.write(blob)
            with self.assertRaises(CommandError) as ctx:
                self._run(path)
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn('rows.0', str(ctx.exception))

    def test_version_lists_schemas(self):
        out = StringIO()
        with patch('sys.stdout', out):
            with self.assertRaises(SystemExit):
                call_command('decompose', '--version')
        self.assertEqual(json.loads(out.getvalue())['graph_binary'], 'SVMG1')


class EntropyCommandTests(TestCase):
    def _run(self, *args, **kwargs):
        out = StringIO()
        call_command('entropy', *args, stdout=out, **kwargs)
        return json.loads(out.getvalue())

    def test_count_on_full_relation(self):
        data = self._run(str(corpus.CORPUS_DIR / 'full2.json'), method='count', n=5)
        self.assertEqual(data['values'], [2, 4, 8, 16, 32])
        self.assertEqual(data['run']['schema'], 'setvalued.entropy.v1')

    def test_spectral(self):
        data = self._run(str(corpus.CORPUS_DIR / 'golden_mean.json'), method='spectral')
        self.assertAlmostEqual(data['rate'], math.log(GOLDEN_MEAN), delta=1e-6)
        self.assertFalse(data['reduced_precision'])

    def test_final_class_restriction(self):
        data = self._run(str(corpus.CORPUS_DIR / 'two_attractors.json'), method='count', n=3, final_class=1)
        self.assertEqual(data['domain'], [2])
        self.assertEqual(data['values'], [1, 1, 1])

    def test_final_class_out_of_range(self):
        with self.assertRaises(CommandError) as ctx:
            self._run(str(corpus.CORPUS_DIR / 'two_attractors.json'), final_class=5)
        self.assertEqual(ctx.exception.returncode, 2)

    def test_separated_needs_eps(self):
        with self.assertRaises(CommandError) as ctx:
            self._run(str(corpus.CORPUS_DIR / 'full2.json'), method='separated')
        self.assertEqual(ctx.exception.returncode, 2)

    def test_budget_exceeded_exit_one(self):
        with self.assertRaises(CommandError) as ctx:
            self._run(
                str(corpus.CORPUS_DIR / 'full2.json'), method='separated', n=12, eps=0.3, budget=50,
            )
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertIn('BudgetExceeded', str(ctx.exception))
        self.assertEqual(AnalysisRun.objects.get().status, 'domain_error')

    def test_theorem_c_study_with_csv(self):
        with tempfile.TemporaryDirectory() as tmp:
            csv_path = os.path.join(tmp, 'study.csv')
            data = self._run(
                str(corpus.spec_path('doubling')), method='theoremc', eps=0.05,
                subdivisions='32,64', csv_path=csv_path,
            )
            with open(csv_path) as f:
                lines = f.read().splitlines()
        self.assertEqual([row['subdivisions'] for row in data['rows']], [32, 64])
        self.assertTrue(lines[0].startswith('# {'))
        table = list(csv.reader(lines[1:]))
        self.assertEqual(table[0][0], 'subdivisions')
        self.assertEqual([r[0] for r in table[1:]], ['32', '64'])

    def test_malformed_graph_exit_two(self):
        with self.assertRaises(CommandError) as ctx:
            self._run(str(corpus.spec_path('malformed_rows')))
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn('rows.1', str(ctx.exception))


class OracleCheckCommandTests(TestCase):
    def test_corpus_and_random(self):
        out = StringIO()
        call_command('oracle_check', corpus=True, random=10, seed=3, stdout=out)
        data = json.loads(out.getvalue())
        self.assertTrue(data['agree'])
        self.assertEqual(len(data['reports']), len(corpus.graph_paths()) + 10)

    def test_disagreement_exit_one(self):
        path = str(corpus.CORPUS_DIR / 'swap2.json')
        out = StringIO()
        with patch('analysis.oracle.spectral.period', return_value=7):
            with self.assertRaises(CommandError) as ctx:
                call_command('oracle_check', path, stdout=out)
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertIn('OracleDisagreement', str(ctx.exception))
        data = json.loads(out.getvalue())
        self.assertFalse(data['agree'])

    def test_nothing_to_check(self):
        with self.assertRaises(CommandError) as ctx:
            call_command('oracle_check', stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)
