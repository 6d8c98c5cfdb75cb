import json
import math
import os
import struct
import tempfile
from io import StringIO

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, override_settings

from analysis.corpus import spec_path
from analysis.models import AnalysisRun
from cells.cellspace import (
    CellSet, PointOutsideSpace, SpaceMismatch, ball_cells, cell_of, interval,
    interval_union, spatial_components, torus2,
)
from cells.codec import MAGIC, graph_from_bytes, graph_to_bytes, read_graph
from cells.errors import SchemaError
from cells.serializers import GraphSerializer, SpaceSerializer, validated
from cells.svmap import (
    DOUBLING, IDENTITY, LOGISTIC, TORAL, BaseMap, EmptyRow, IdOutOfRange, InvalidBaseMap,
    RowCountMismatch, explicit_graph, fatten, forward_orbit, image, iterate_image,
)


class CellSpaceTests(SimpleTestCase):
    def test_interval_endpoints(self):
        space = interval(0, 1, 4)
        self.assertEqual(cell_of(space, 0.0), 0)
        self.assertEqual(cell_of(space, 1.0), 3)
        self.assertEqual(cell_of(space, 0.25), 1)

    def test_torus_reduces_mod_one(self):
        space = torus2(4, 4)
        self.assertEqual(cell_of(space, (1.25, -0.25)), cell_of(space, (0.25, 0.75)))
        self.assertEqual(cell_of(space, (1.25, -0.25)), 13)

    def test_point_in_gap_of_union(self):
        space = interval_union([(0, 1), (3, 4)], [4, 4])
        self.assertEqual(cell_of(space, 3.0), 4)
        with self.assertRaises(PointOutsideSpace):
            cell_of(space, 2.0)

    def test_invalid_spaces_rejected(self):
        with self.assertRaises(ValueError):
            interval(1, 0, 4)
        with self.assertRaises(ValueError):
            interval_union([(0, 2), (1, 3)], [2, 2])
        with self.assertRaises(ValueError):
            torus2(0, 4)

    def test_cell_ids_contiguous_across_pieces(self):
        space = interval_union([(0, 1), (3, 4)], [2, 3])
        self.assertEqual(space.n_cells, 5)
        self.assertEqual(space.piece_of_cell.tolist(), [0, 0, 1, 1, 1])
        lo, hi = space.cell_box(2)
        self.assertAlmostEqual(lo, 3.0)
        self.assertAlmostEqual(hi, 3.0 + 1.0 / 3.0)

    def test_space_id_depends_on_grid(self):
        self.assertEqual(interval(0, 1, 4).space_id, interval(0, 1, 4).space_id)
        self.assertNotEqual(interval(0, 1, 4).space_id, interval(0, 1, 8).space_id)

    def test_torus_distance_wraps(self):
        space = torus2(4, 4)
        self.assertAlmostEqual(space.distance((0.05, 0.5), (0.95, 0.5)), 0.1)


class BallCellsTests(SimpleTestCase):
    def test_ball_on_interval(self):
        space = interval(0, 1, 10)
        self.assertEqual(ball_cells(space, 0.55, 0.06).to_list(), [4, 5, 6])

    def test_large_radius_gives_every_cell(self):
        space = interval(0, 1, 10)
        self.assertEqual(len(ball_cells(space, 0.3, 5.0)), 10)
        torus = torus2(4, 4)
        self.assertEqual(len(ball_cells(torus, (0.5, 0.5), 2.0)), 16)

    def test_ball_stays_in_its_piece(self):
        space = interval_union([(0, 1), (3, 4)], [4, 4])
        self.assertEqual(ball_cells(space, 0.5, 0.6).to_list(), [0, 1, 2, 3])

    def test_ball_wraps_on_torus(self):
        space = torus2(4, 4)
        ball = ball_cells(space, (0.05, 0.05), 0.1)
        self.assertIn(cell_of(space, (0.9, 0.9)), ball)
        self.assertIn(0, ball)

    def test_ball_contains_center_cell(self):
        space = interval(0, 1, 16)
        for center in (0.0, 0.31, 0.5, 1.0):
            self.assertIn(cell_of(space, center), ball_cells(space, center, 0.01))

    def test_nonpositive_radius_rejected(self):
        with self.assertRaises(ValueError):
            ball_cells(interval(0, 1, 4), 0.5, 0.0)

    def test_ball_grows_with_radius(self):
        for space, center in ((interval(0, 1, 32), 0.4), (torus2(16, 16), (0.2, 0.9))):
            balls = [ball_cells(space, center, r) for r in (0.01, 0.05, 0.1, 0.3)]
            for small, large in zip(balls, balls[1:]):
                self.assertTrue(small.issubset(large))

    def test_ball_covers_every_point_inside(self):
        rng = np.random.default_rng(3)
        space = interval(0, 1, 32)
        for center, radius in ((0.4, 0.07), (0.02, 0.1), (0.97, 0.05)):
            ball = ball_cells(space, center, radius)
            points = center + rng.uniform(-radius, radius, 200) * 0.999
            for p in points[(points >= 0) & (points <= 1)]:
                self.assertIn(cell_of(space, p), ball)
        torus = torus2(16, 16)
        ball = ball_cells(torus, (0.02, 0.5), 0.08)
        for p in np.array([0.02, 0.5]) + rng.uniform(-0.08, 0.08, (200, 2)) * 0.999:
            self.assertIn(cell_of(torus, p), ball)


class CellSetTests(SimpleTestCase):
    def setUp(self):
        self.space = interval(0, 1, 8)

    def test_set_algebra(self):
        a = CellSet.from_ids(self.space, [0, 1, 2])
        b = CellSet.from_ids(self.space, [2, 3])
        self.assertEqual((a | b).to_list(), [0, 1, 2, 3])
        self.assertEqual((a & b).to_list(), [2])
        self.assertEqual((a - b).to_list(), [0, 1])
        self.assertEqual(len(a.complement()), 5)
        self.assertTrue(CellSet.from_ids(self.space, [1]).issubset(a))
        self.assertFalse(CellSet.empty(self.space))

    def test_mixing_spaces_raises(self):
        a = CellSet.full(self.space)
        b = CellSet.full(interval(0, 1, 4))
        with self.assertRaises(SpaceMismatch):
            a | b

    def test_spatial_components_split_at_gap(self):
        cells = CellSet.from_ids(self.space, [0, 1, 2, 5, 6])
        parts = spatial_components(self.space, cells)
        self.assertEqual([p.to_list() for p in parts], [[0, 1, 2], [5, 6]])

    def test_full_torus_is_one_component(self):
        space = torus2(5, 3)
        self.assertEqual(len(spatial_components(space, CellSet.full(space))), 1)

    def test_union_pieces_are_separate_components(self):
        space = interval_union([(0, 1), (3, 4)], [3, 3])
        parts = spatial_components(space, CellSet.full(space))
        self.assertEqual([p.to_list() for p in parts], [[0, 1, 2], [3, 4, 5]])

    def test_torus_component_wraps(self):
        space = torus2(4, 1)
        cells = CellSet.from_ids(space, [0, 3])
        self.assertEqual(len(spatial_components(space, cells)), 1)


class BaseMapTests(SimpleTestCase):
    def test_toral_needs_unimodular_matrix(self):
        with self.assertRaises(InvalidBaseMap):
            BaseMap(TORAL, {'matrix': [[2, 0], [0, 1]]})

    def test_toral_map_needs_torus(self):
        base = BaseMap(TORAL, {'matrix': [[2, 1], [1, 1]]})
        with self.assertRaises(InvalidBaseMap):
            fatten(interval(0, 1, 4), base, 0.1)

    def test_supplied_lipschitz_below_derived_rejected(self):
        base = BaseMap(DOUBLING, lipschitz=1.5)
        with self.assertRaises(InvalidBaseMap):
            base.lipschitz_on(interval(0, 1, 4))

    def test_doubling_sends_one_to_one(self):
        base = BaseMap(DOUBLING)
        self.assertEqual(base.evaluate(np.array([0.25, 0.75, 1.0])).tolist(), [0.5, 0.5, 1.0])

    def test_unknown_kind(self):
        with self.assertRaises(InvalidBaseMap):
            BaseMap('tent')


class FattenTests(SimpleTestCase):
    def test_identity_rows_contain_diagonal(self):
        space = interval(0, 1, 4)
        graph = fatten(space, BaseMap(IDENTITY), 0.3)
        self.assertTrue({0, 1}.issubset(graph.row(0).tolist()))
        for c in range(space.n_cells):
            self.assertIn(c, graph.row(c))

    def test_cat_map_rows_nonempty(self):
        space = torus2(4, 4)
        graph = fatten(space, BaseMap(TORAL, {'matrix': [[2, 1], [1, 1]]}), 0.3)
        self.assertTrue(np.all(graph.row_sizes > 0))
        self.assertGreaterEqual(graph.n_edges, 16)

    def test_cat_map_rows_cover_sampled_images(self):
        space = torus2(8, 8)
        base = BaseMap(TORAL, {'matrix': [[2, 1], [1, 1]]})
        graph = fatten(space, base, 0.05)
        rng = np.random.default_rng(7)
        for c in range(space.n_cells):
            lo, hi = space.cell_box(c)
            samples = lo + rng.random((20, 2)) * (hi - lo)
            hits = {cell_of(space, p) for p in base.evaluate(samples)}
            self.assertTrue(hits.issubset(set(graph.row(c).tolist())), c)

    def test_fattened_rows_are_connected(self):
        space = interval(0, 1, 64)
        graph = fatten(space, BaseMap(DOUBLING), 0.02)
        for c in range(space.n_cells):
            self.assertEqual(len(spatial_components(space, graph.row_set(c))), 1, c)

    def test_rows_cover_the_fattened_image_of_each_cell(self):
        rng = np.random.default_rng(11)
        cases = [
            (torus2(8, 8), BaseMap(TORAL, {'matrix': [[2, 1], [1, 1]]}), 0.05),
            (interval(0, 1, 64), BaseMap(DOUBLING), 0.02),
            (interval(0, 1, 64), BaseMap(LOGISTIC, {'a': 3.9}), 0.03),
        ]
        for space, base, eps in cases:
            graph = fatten(space, base, eps)
            for c in range(space.n_cells):
                lo, hi = space.cell_box(c)
                row = set(graph.row(c).tolist())
                if space.is_torus:
                    x = lo + rng.random((20, 2)) * (hi - lo)
                    y = base.evaluate(x) + rng.uniform(-eps, eps, (20, 2)) * 0.999
                    hits = {cell_of(space, p) for p in y}
                else:
                    x = lo + rng.random(20) * (hi - lo)
                    y = base.evaluate(x) + rng.uniform(-eps, eps, 20) * 0.999
                    hits = {cell_of(space, p) for p in y[(y >= 0) & (y <= 1)]}
                self.assertTrue(hits.issubset(row), (base, c))

    def test_rows_contain_the_ball_around_the_center_image(self):
        cases = [
            (torus2(8, 8), BaseMap(TORAL, {'matrix': [[2, 1], [1, 1]]}), 0.05),
            (interval(0, 1, 64), BaseMap(LOGISTIC, {'a': 3.6}), 0.02),
            (interval(0, 1, 16), BaseMap(IDENTITY), 0.1),
        ]
        for space, base, eps in cases:
            graph = fatten(space, base, eps)
            images = base.evaluate(space.cell_centers)
            for c in range(space.n_cells):
                ball = ball_cells(space, images[c], eps)
                self.assertTrue(ball.issubset(graph.row_set(c)), (base, c))

    @override_settings(SETVALUED_THREADS=4)
    def test_threaded_fattening_matches_serial(self):
        space = torus2(8, 8)
        base = BaseMap(TORAL, {'matrix': [[2, 1], [1, 1]]})
        threaded = fatten(space, base, 0.1)
        with self.settings(SETVALUED_THREADS=1):
            serial = fatten(space, base, 0.1)
        self.assertEqual(threaded, serial)

    def test_nonpositive_epsilon_rejected(self):
        with self.assertRaises(ValueError):
            fatten(interval(0, 1, 4), BaseMap(IDENTITY), 0.0)


class ExplicitGraphTests(SimpleTestCase):
    def test_row_errors(self):
        space = interval(0, 1, 3)
        with self.assertRaises(EmptyRow) as ctx:
            explicit_graph(space, [[0], [], [1]])
        self.assertEqual(ctx.exception.row, 1)
        with self.assertRaises(IdOutOfRange):
            explicit_graph(space, [[0], [1], [3]])
        with self.assertRaises(RowCountMismatch):
            explicit_graph(space, [[0], [1]])

    def test_rows_are_canonical(self):
        graph = explicit_graph(interval(0, 1, 2), [[1, 0, 1], [0]])
        self.assertEqual(graph.rows(), [[0, 1], [0]])
        self.assertTrue(graph.is_explicit)

    def test_disconnected_rows_allowed(self):
        graph = explicit_graph(interval(0, 1, 3), [[0, 2], [1], [2]])
        self.assertEqual(graph.row(0).tolist(), [0, 2])

    def test_graph_id_tracks_edges(self):
        space = interval(0, 1, 2)
        self.assertEqual(
            explicit_graph(space, [[1], [0]]).graph_id, explicit_graph(space, [[1], [0]]).graph_id,
        )
        self.assertNotEqual(
            explicit_graph(space, [[1], [0]]).graph_id, explicit_graph(space, [[0], [1]]).graph_id,
        )

    def test_power_of_swap_is_identity(self):
        graph = explicit_graph(interval_union([(0, 1), (3, 4)], [1, 1]), [[1], [0]])
        self.assertEqual(graph.power(2).rows(), [[0], [1]])


class ImageTests(SimpleTestCase):
    def setUp(self):
        self.swap = explicit_graph(interval_union([(0, 1), (3, 4)], [1, 1]), [[1], [0]])
        self.full = explicit_graph(interval(0, 1, 2), [[0, 1], [0, 1]])

    def test_swap_image(self):
        start = CellSet.from_ids(self.swap.space, [0])
        self.assertEqual(image(self.swap, start).to_list(), [1])
        self.assertEqual(iterate_image(self.swap, start, 2).to_list(), [0])

    def test_full_relation_image(self):
        start = CellSet.from_ids(self.full.space, [0])
        self.assertEqual(image(self.full, start).to_list(), [0, 1])

    def test_whole_space_image_is_row_union(self):
        graph = explicit_graph(interval(0, 1, 3), [[1], [1], [1, 2]])
        self.assertEqual(image(graph, CellSet.full(graph.space)).to_list(), [1, 2])

    def test_image_is_monotone(self):
        graph = explicit_graph(interval(0, 1, 4), [[1], [2, 3], [0], [3]])
        small = CellSet.from_ids(graph.space, [0])
        large = CellSet.from_ids(graph.space, [0, 2])
        self.assertTrue(image(graph, small).issubset(image(graph, large)))

    def test_doubling_spreads_over_every_cell(self):
        space = interval(0, 1, 64)
        graph = fatten(space, BaseMap(DOUBLING), 0.02)
        start = CellSet.from_ids(space, [20])
        self.assertEqual(len(iterate_image(graph, start, 10)), 64)

    def test_forward_orbit(self):
        graph = explicit_graph(interval(0, 1, 3), [[1], [2], [2]])
        start = CellSet.from_ids(graph.space, [0])
        self.assertEqual(forward_orbit(graph, start).to_list(), [1, 2])


class SerializerTests(SimpleTestCase):
    def test_space_serializer_builds_space(self):
        attrs = validated(SpaceSerializer, {'kind': 'torus2', 'grid': [4, 2]}, 'space')
        self.assertEqual(attrs['space'].n_cells, 8)

    def test_torus_without_grid(self):
        with self.assertRaises(SchemaError) as ctx:
            validated(SpaceSerializer, {'kind': 'torus2'}, 'space')
        self.assertIn('grid', str(ctx.exception))

    def test_graph_errors_name_the_row(self):
        data = {
            'space': {'kind': 'interval', 'pieces': [[0, 1]], 'subdivisions': [3]},
            'rows': [[0], [], [5]],
        }
        with self.assertRaises(SchemaError) as ctx:
            validated(GraphSerializer, data, 'graph')
        message = str(ctx.exception)
        self.assertIn('rows.1', message)
        self.assertIn('rows.2', message)

    def test_non_object_document(self):
        with self.assertRaises(SchemaError):
            validated(GraphSerializer, [1, 2], 'graph')


class CodecTests(SimpleTestCase):
    def test_binary_file_reads_back(self):
        space = torus2(4, 4)
        graph = fatten(space, BaseMap(TORAL, {'matrix': [[2, 1], [1, 1]]}), 0.2)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'cat.svmg')
            with open(path, 'wb') as f:
                f.write(graph_to_bytes(graph))
            self.assertEqual(read_graph(path), graph)

    def test_bad_magic(self):
        with self.assertRaises(SchemaError):
            graph_from_bytes(b'NOPE!' + b'\x00' * 16)

    def test_truncated_body(self):
        blob = graph_to_bytes(explicit_graph(interval(0, 1, 2), [[1], [0]]))
        with self.assertRaises(SchemaError):
            graph_from_bytes(blob[:-6])

    def test_invalid_json_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'bad.json')
            with open(path, 'w') as f:
                f.write('{"space": ')
            with self.assertRaises(SchemaError):
                read_graph(path)

    def _body(self, n_cells, indptr, indices):
        header = json.dumps({'space': interval(0, 1, n_cells).to_dict(), 'epsilon': 0.0}).encode()
        return b''.join([
            MAGIC, struct.pack('<I', len(header)), header,
            struct.pack('<II', n_cells, len(indices)),
            np.asarray(indptr, dtype='<u4').tobytes(),
            np.asarray(indices, dtype='<u4').tobytes(),
        ])

    def test_unsorted_row_names_the_row(self):
        with self.assertRaises(SchemaError) as ctx:
            graph_from_bytes(self._body(3, [0, 1, 3, 4], [0, 2, 1, 2]))
        self.assertIn('rows.1', str(ctx.exception))
        self.assertEqual(list(ctx.exception.errors['rows']), ['1'])

    def test_duplicate_id_in_row(self):
        with self.assertRaises(SchemaError) as ctx:
            graph_from_bytes(self._body(2, [0, 2, 3], [1, 1, 0]))
        self.assertIn('rows.0', str(ctx.exception))

    def test_empty_row_is_a_schema_error(self):
        with self.assertRaises(SchemaError) as ctx:
            graph_from_bytes(self._body(3, [0, 1, 1, 2], [1, 0]))
        self.assertIn('rows.1: Row is empty.', str(ctx.exception))

    def test_out_of_range_id_names_its_row(self):
        with self.assertRaises(SchemaError) as ctx:
            graph_from_bytes(self._body(3, [0, 1, 2, 4], [1, 2, 0, 7]))
        self.assertIn('rows.2: Cell id 7 is out of range 0..2.', str(ctx.exception))

    def test_every_bad_row_is_reported(self):
        with self.assertRaises(SchemaError) as ctx:
            graph_from_bytes(self._body(3, [0, 0, 2, 3], [2, 1, 9]))
        self.assertEqual(list(ctx.exception.errors['rows']), ['0', '1', '2'])

    def test_decreasing_indptr(self):
        with self.assertRaises(SchemaError):
            graph_from_bytes(self._body(2, [0, 2, 1], [0]))

    def test_hand_built_body_reads_back(self):
        graph = graph_from_bytes(self._body(3, [0, 2, 3, 4], [0, 2, 1, 0]))
        self.assertEqual(graph.row(0).tolist(), [0, 2])
        self.assertEqual(graph, explicit_graph(interval(0, 1, 3), [[0, 2], [1], [0]]))


class BuildCommandTests(TestCase):
    def test_build_fattened_graph(self):
        out = StringIO()
        call_command('build', str(spec_path('doubling')), stdout=out)
        data = json.loads(out.getvalue())
        self.assertEqual(len(data['rows']), 64)
        self.assertEqual(data['source']['kind'], DOUBLING)
        self.assertEqual(data['run']['schema'], 'setvalued.graph.v1')
        self.assertIn(str(spec_path('doubling')), data['run']['input_sha256'])
        self.assertEqual(AnalysisRun.objects.get().status, 'completed')

    def test_build_is_deterministic(self):
        first, second = StringIO(), StringIO()
        call_command('build', str(spec_path('catmap')), stdout=first)
        call_command('build', str(spec_path('catmap')), stdout=second)
        self.assertEqual(first.getvalue(), second.getvalue())

    def test_binary_output(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'cat.svmg')
            call_command('build', str(spec_path('catmap')), fmt='binary', output=path, stdout=StringIO())
            graph = read_graph(path)
        self.assertEqual(graph.n_cells, 256)
        self.assertEqual(graph.source['kind'], TORAL)

    def test_binary_needs_output(self):
        with self.assertRaises(CommandError) as ctx:
            call_command('build', str(spec_path('catmap')), fmt='binary', stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)

    def test_malformed_rows_exit_two(self):
        with self.assertRaises(CommandError) as ctx:
            call_command('build', str(spec_path('malformed_rows')), stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn('SchemaError', str(ctx.exception))
        self.assertIn('rows.1', str(ctx.exception))
        run = AnalysisRun.objects.get()
        self.assertEqual(run.status, 'io_error')
        self.assertEqual(run.error_name, 'SchemaError')

    def test_missing_file_exit_two(self):
        with self.assertRaises(CommandError) as ctx:
            call_command('build', '/nonexistent/spec.json', stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)

    def test_domain_error_exit_one(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'spec.json')
            with open(path, 'w') as f:
                json.dump({
                    'space': {'kind': 'interval', 'pieces': [[0, 1]], 'subdivisions': [4]},
                    'map': {'kind': 'doubling', 'lipschitz': 1.0},
                    'epsilon': 0.1,
                }, f)
            with self.assertRaises(CommandError) as ctx:
                call_command('build', path, stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertTrue(str(ctx.exception).startswith('InvalidBaseMap'))

    def test_output_file_written(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'graph.json')
            call_command('build', str(spec_path('doubling')), output=path, stdout=StringIO())
            with open(path) as f:
                data = json.load(f)
        self.assertTrue(math.isclose(data['epsilon'], 0.02))
