import csv
import json
import math
import os
import tempfile
from io import StringIO
from unittest.mock import PropertyMock, patch

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, override_settings

from analysis.corpus import load_spec
from analysis.models import AnalysisRun
from anosov.shadowing import (
    CORRECTIONS, FORWARD, DefectTooLarge, DensityNotAchieved, GridTooCoarse,
    NotHyperbolic, NotTransitive, NotUnimodular, PrecisionLoss, ShadowingThresholdExceeded,
    ToralAuto, corrections, dense_delta_orbit, epsilon_net, make_pseudo_orbit, shadow,
    theorem_a_certificate, torus_norm, uncovered_points,
)
from cells.cellspace import interval, interval_union, torus2
from cells.serializers import BaseMapSerializer, validated
from cells.svmap import explicit_graph, fatten

CAT = [[2, 1], [1, 1]]


class ToralAutoTests(SimpleTestCase):
    def test_cat_map_eigenvalues(self):
        auto = ToralAuto.from_matrix(CAT)
        self.assertAlmostEqual(auto.lambda_u, (3 + math.sqrt(5)) / 2)
        self.assertAlmostEqual(auto.lambda_u * auto.lambda_s, 1.0)
        self.assertGreaterEqual(auto.basis_distortion, 1.0)

    def test_eigenbasis_diagonalises(self):
        auto = ToralAuto.from_matrix(CAT)
        image = auto.array @ auto.eigenbasis
        expected = auto.eigenbasis * np.array([auto.lambda_u, auto.lambda_s])
        np.testing.assert_allclose(image, expected, atol=1e-12)

    def test_identity_is_not_hyperbolic(self):
        with self.assertRaises(NotHyperbolic):
            ToralAuto.from_matrix([[1, 0], [0, 1]])

    def test_rotation_is_not_hyperbolic(self):
        with self.assertRaises(NotHyperbolic):
            ToralAuto.from_matrix([[0, -1], [1, 0]])

    def test_determinant_must_be_unit(self):
        with self.assertRaises(NotUnimodular):
            ToralAuto.from_matrix([[2, 0], [0, 1]])

    def test_orientation_reversing_map(self):
        auto = ToralAuto.from_matrix([[1, 1], [1, 0]])
        self.assertAlmostEqual(auto.lambda_u, (1 + math.sqrt(5)) / 2)
        self.assertLess(auto.lambda_s, 0)

    def test_threshold(self):
        auto = ToralAuto.from_matrix(CAT)
        self.assertGreater(auto.shadowing_threshold(0.2), 0.05)
        self.assertLess(auto.shadowing_threshold(0.2), 0.1)


class PseudoOrbitTests(SimpleTestCase):
    def setUp(self):
        self.auto = ToralAuto.from_matrix(CAT)

    def test_zero_defects_give_true_orbit(self):
        po = make_pseudo_orbit(self.auto, (0.3, 0.7), 50, 1e-3, defects=[(0.0, 0.0)] * 50)
        self.assertEqual(po.max_defect, 0.0)
        for k in range(po.n):
            self.assertEqual(po.fixed_points[k + 1], self.auto.step_fixed(po.fixed_points[k]))

    def test_injected_defect_stays_where_put(self):
        defects = [(0.0, 0.0)] * 10
        defects[4] = (5e-4, -2e-4)
        po = make_pseudo_orbit(self.auto, (0.1, 0.2), 10, 1e-3, defects=defects)
        nonzero = [k for k, (ex, ey) in enumerate(po.fixed_defects) if ex or ey]
        self.assertEqual(nonzero, [4])
        self.assertAlmostEqual(po.defects[4][0], 5e-4)

    def test_seeded_defects_below_delta(self):
        po = make_pseudo_orbit(self.auto, (0.5, 0.5), 100, 1e-3, seed=11)
        self.assertEqual(po.n, 100)
        self.assertLess(po.max_defect, 1e-3)
        again = make_pseudo_orbit(self.auto, (0.5, 0.5), 100, 1e-3, seed=11)
        self.assertEqual(po.fixed_points, again.fixed_points)

    def test_defect_too_large(self):
        with self.assertRaises(DefectTooLarge) as ctx:
            make_pseudo_orbit(self.auto, (0.5, 0.5), 2, 1e-3, defects=[(0.0, 0.0), (2e-3, 0.0)])
        self.assertEqual(ctx.exception.step, 1)


class ShadowTests(SimpleTestCase):
    def setUp(self):
        self.auto = ToralAuto.from_matrix(CAT)

    def test_true_orbit_shadows_itself(self):
        po = make_pseudo_orbit(self.auto, (0.25, 0.6), 40, 1e-3, defects=[(0.0, 0.0)] * 40)
        result = shadow(self.auto, po)
        self.assertEqual(result.max_distance, 0.0)
        self.assertEqual(result.verified_by, FORWARD)

    def test_single_defect_within_bound(self):
        delta = 1e-3
        for step in (0, 7, 19):
            defects = [(0.0, 0.0)] * 20
            defects[step] = (0.9 * delta, 0.0)
            po = make_pseudo_orbit(self.auto, (0.4, 0.1), 20, delta, defects=defects)
            result = shadow(self.auto, po)
            self.assertLessEqual(result.max_distance, result.bound, step)
            self.assertGreater(result.max_distance, 0.0)

    def test_corrections_match_forward_shadow(self):
        po = make_pseudo_orbit(self.auto, (0.4, 0.1), 30, 1e-4, seed=5)
        result = shadow(self.auto, po)
        fix = corrections(self.auto, po.defects)
        np.testing.assert_allclose(torus_norm(fix), result.per_step_distance, atol=1e-9)

    def test_corrections_are_linear_in_the_defects(self):
        rng = np.random.default_rng(4)
        first = rng.uniform(-1e-3, 1e-3, (40, 2))
        second = rng.uniform(-1e-3, 1e-3, (40, 2))
        combined = corrections(self.auto, first + second)
        split = corrections(self.auto, first) + corrections(self.auto, second)
        np.testing.assert_allclose(combined, split, rtol=0, atol=1e-12)
        np.testing.assert_allclose(
            corrections(self.auto, 3.0 * first), 3.0 * corrections(self.auto, first), rtol=0, atol=1e-12,
        )

    def test_random_pseudo_orbits_across_seeds(self):
        delta = 1e-4
        ratios = []
        for seed in range(20):
            po = make_pseudo_orbit(self.auto, (0.3, 0.3), 200, delta, seed=seed)
            result = shadow(self.auto, po)
            self.assertLessEqual(result.max_distance, result.bound)
            ratios.append(result.max_distance / delta)
        self.assertLess(max(ratios), self.auto.bound_constant)

    @override_settings(SHADOW_MAX_DIGITS=40)
    def test_correction_fallback(self):
        po = make_pseudo_orbit(self.auto, (0.3, 0.3), 200, 1e-4, seed=1)
        result = shadow(self.auto, po)
        self.assertEqual(result.verified_by, CORRECTIONS)
        self.assertTrue(result.precision_loss)
        self.assertLessEqual(result.max_distance, result.bound)

    @override_settings(SHADOW_MAX_DIGITS=40)
    def test_strict_mode_raises(self):
        po = make_pseudo_orbit(self.auto, (0.3, 0.3), 200, 1e-4, seed=1)
        with self.assertRaises(PrecisionLoss):
            shadow(self.auto, po, strict=True)


class DenseOrbitTests(SimpleTestCase):
    def _check_admissible(self, graph, sequence):
        for a, b in zip(sequence, sequence[1:]):
            self.assertIn(b, graph.row(a))

    def test_full_relation(self):
        graph = explicit_graph(interval(0, 1, 3), [[0, 1, 2]] * 3)
        sequence = dense_delta_orbit(graph)
        self.assertEqual(sorted(set(sequence)), [0, 1, 2])
        self.assertEqual(len(sequence), 3)

    def test_swap(self):
        graph = explicit_graph(interval_union([(0, 1), (3, 4)], [1, 1]), [[1], [0]])
        self.assertEqual(dense_delta_orbit(graph), [0, 1])

    def test_fattened_cat_map_visits_every_cell(self):
        spec = load_spec('catmap')
        base = validated(BaseMapSerializer, spec['map'], 'map')['base']
        graph = fatten(torus2(16, 16), base, spec['epsilon'])
        sequence = dense_delta_orbit(graph)
        self.assertEqual(len(set(sequence)), 256)
        self._check_admissible(graph, sequence)

    def test_not_transitive(self):
        graph = explicit_graph(interval(0, 1, 2), [[0], [1]])
        with self.assertRaises(NotTransitive):
            dense_delta_orbit(graph)


class DensityCheckTests(SimpleTestCase):
    def test_net_spacing(self):
        net = epsilon_net(0.2)
        self.assertEqual(len(net), math.ceil(2.0 / 0.2) ** 2)
        self.assertEqual(net.min(), 0.0)
        self.assertLess(net.max(), 1.0)

    def test_uncovered_points(self):
        orbit = np.array([[0.05, 0.05]])
        missing = uncovered_points(epsilon_net(0.4), orbit, 0.4)
        self.assertNotIn([0.0, 0.0], missing)
        self.assertIn([0.6, 0.6], missing)

    @override_settings(SETVALUED_THREADS=3)
    def test_threaded_check_matches_serial(self):
        net = epsilon_net(0.05)
        orbit = np.random.default_rng(2).random((60, 2))
        threaded = uncovered_points(net, orbit, 0.05)
        with self.settings(SETVALUED_THREADS=1):
            serial = uncovered_points(net, orbit, 0.05)
        self.assertEqual(threaded, serial)
        self.assertTrue(serial)


class CertificateTests(SimpleTestCase):
    def setUp(self):
        self.auto = ToralAuto.from_matrix(CAT)

    def test_cat_map_certificate(self):
        report = theorem_a_certificate(self.auto, 64, 0.05, 0.2)
        self.assertTrue(report.transitive)
        self.assertTrue(report.density_ok)
        self.assertEqual(report.uncovered, [])
        self.assertGreaterEqual(report.orbit_len, 64 * 64)
        self.assertLessEqual(report.max_shadow_dist, report.bound)
        self.assertLess(report.orbit_defect_bound, 0.1)

    def test_finer_certificate(self):
        report = theorem_a_certificate(self.auto, 64, 0.025, 0.1)
        self.assertTrue(report.density_ok)
        self.assertAlmostEqual(report.shadowing_delta, 0.1 / self.auto.bound_constant)
        self.assertFalse(report.defect_within_shadowing_delta)
        self.assertEqual(report.shadow_within_eps, report.max_shadow_dist < 0.1)
        self.assertIn('only check made after it', report.note)
        self.assertIn('measured, not implied', report.note)

    def test_coarse_certificate(self):
        report = theorem_a_certificate(self.auto, 64, 0.1, 0.4)
        self.assertTrue(report.density_ok)
        self.assertEqual(report.shadow_within_eps, report.max_shadow_dist < 0.4)

    def test_small_defect_bound_implies_the_shadow_distance(self):
        with patch.object(ToralAuto, 'bound_constant', new_callable=PropertyMock, return_value=1.0):
            report = theorem_a_certificate(self.auto, 64, 0.05, 0.2)
        self.assertEqual(report.shadowing_delta, 0.2)
        self.assertTrue(report.defect_within_shadowing_delta)
        self.assertNotIn('not implied', report.note)

    def test_delta_above_threshold(self):
        with self.assertRaises(ShadowingThresholdExceeded):
            theorem_a_certificate(self.auto, 64, 0.1, 0.2)

    def test_grid_too_coarse(self):
        with self.assertRaises(GridTooCoarse):
            theorem_a_certificate(self.auto, 8, 0.05, 0.2)

    def test_short_orbit_is_not_dense(self):
        with self.assertRaises(DensityNotAchieved) as ctx:
            theorem_a_certificate(self.auto, 64, 0.05, 0.2, steps=1)
        self.assertTrue(ctx.exception.uncovered)
        self.assertFalse(ctx.exception.report.density_ok)


class AnosovCommandTests(TestCase):
    def test_certificate_json_and_csv(self):
        out = StringIO()
        with tempfile.TemporaryDirectory() as tmp:
            csv_path = os.path.join(tmp, 'orbit.csv')
            call_command(
                'anosov', matrix='2,1,1,1', grid=64, delta=0.05, eps=0.2, csv_path=csv_path, stdout=out,
            )
            with open(csv_path) as f:
                lines = f.read().splitlines()
        data = json.loads(out.getvalue())
        self.assertTrue(data['density_ok'])
        self.assertEqual(data['matrix'], CAT)
        self.assertEqual(data['run']['schema'], 'setvalued.anosov.v1')
        self.assertEqual(len(data['shadow_start']), 2)
        self.assertFalse(data['defect_within_shadowing_delta'])
        self.assertIsInstance(data['shadow_within_eps'], bool)
        self.assertIn('only check made after it', data['note'])
        table = list(csv.reader(lines[1:]))
        self.assertEqual(table[0], ['k', 'x', 'y', 'distance'])
        self.assertEqual(len(table) - 1, data['orbit_len'])
        self.assertEqual(AnosovCommandTests._status(), 'completed')

    def test_density_failure_still_writes_report(self):
        out = StringIO()
        with self.assertRaises(CommandError) as ctx:
            call_command('anosov', delta=0.05, eps=0.2, steps=1, stdout=out)
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertIn('DensityNotAchieved', str(ctx.exception))
        self.assertFalse(json.loads(out.getvalue())['density_ok'])
        self.assertEqual(AnosovCommandTests._status(), 'domain_error')

    def test_identity_matrix_rejected(self):
        with self.assertRaises(CommandError) as ctx:
            call_command('anosov', matrix='1,0,0,1', delta=0.05, eps=0.2, stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertIn('NotHyperbolic', str(ctx.exception))

    def test_bad_matrix_text(self):
        with self.assertRaises(CommandError) as ctx:
            call_command('anosov', matrix='2,1,1', delta=0.05, eps=0.2, stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)

    @staticmethod
    def _status():
        return AnalysisRun.objects.get().status
