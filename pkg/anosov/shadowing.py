"""Pseudo-orbits and their shadows for linear hyperbolic toral automorphisms.

Points of a pseudo-orbit are kept as exact dyadic fractions k / 2**64, so
true orbits are reproduced bit for bit. The shadow of a pseudo-orbit is
written in eigencoordinates: with defects e_k = x_{k+1} - A x_k, the point
y_k = x_k + c_k is a true orbit when c_{k+1} = A c_k - e_k, which is solved
backwards along the unstable direction and forwards along the stable one.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings
from mpmath import mp, mpf
from scipy.sparse.csgraph import breadth_first_order

from analysis.spectral import is_transitive
from cells.cellspace import CellSet, torus2
from cells.errors import DomainError
from cells.svmap import TORAL, BaseMap, fatten, image

logger = logging.getLogger(__name__)

SCALE = 1 << 64
HALF = 1 << 63

FORWARD = 'forward'
CORRECTIONS = 'corrections'

# Digits beyond the unstable growth: 64-bit start coordinates plus margin
GUARD_DIGITS = 30


class NotUnimodular(DomainError):
    pass


class NotHyperbolic(DomainError):
    pass


class DefectTooLarge(DomainError):
    def __init__(self, step, norm, delta):
        super().__init__(f'Defect at step {step} has norm {norm} >= delta {delta}')
        self.step = step
        self.norm = norm
        self.delta = delta


class PrecisionLoss(DomainError):
    def __init__(self, digits, limit):
        super().__init__(f'Forward verification needs {digits} digits, limit is {limit}')
        self.digits = digits
        self.limit = limit


class NotTransitive(DomainError):
    pass


class ShadowingThresholdExceeded(DomainError):
    def __init__(self, delta, threshold):
        super().__init__(f'delta {delta} exceeds the shadowing threshold {threshold:.6g}')
        self.delta = delta
        self.threshold = threshold


class GridTooCoarse(DomainError):
    def __init__(self, grid, half_diameter, delta):
        super().__init__(
            f'Grid {grid} has cell half-diameter {half_diameter:.6g}, need < delta/2 = {delta / 2:.6g}'
        )
        self.grid = grid


class DensityNotAchieved(DomainError):
    def __init__(self, report):
        super().__init__(f'{len(report.uncovered)} net points are not within eps of the shadow orbit')
        self.report = report
        self.uncovered = report.uncovered


@dataclass(frozen=True, eq=False)
class ToralAuto:
    matrix: tuple
    lambda_u: float
    lambda_s: float
    eigenbasis: np.ndarray
    basis_distortion: float

    @classmethod
    def from_matrix(cls, matrix):
        values = np.asarray(matrix, dtype=float).ravel()
        if values.shape != (4,) or not np.all(values == np.round(values)):
            raise NotUnimodular('A toral automorphism needs four integer entries.')
        a, b, c, d = (int(v) for v in values)
        det = a * d - b * c
        if abs(det) != 1:
            raise NotUnimodular(f'Determinant is {det}, not +-1.')
        trace = a + d
        if (det == 1 and abs(trace) <= 2) or (det == -1 and trace == 0):
            raise NotHyperbolic(f'Matrix {[[a, b], [c, d]]} has an eigenvalue on the unit circle.')

        root = math.sqrt(trace * trace - 4 * det)
        lambda_u = (trace + math.copysign(root, trace)) / 2.0
        lambda_s = det / lambda_u
        vectors = np.array([[b, b], [lambda_u - a, lambda_s - a]], dtype=float)
        vectors /= np.linalg.norm(vectors, axis=0)
        distortion = float(
            np.abs(vectors).sum(axis=1).max() * np.abs(np.linalg.inv(vectors)).sum(axis=1).max()
        )
        return cls((a, b, c, d), lambda_u, lambda_s, vectors, distortion)

    @property
    def array(self):
        return np.array(self.matrix, dtype=np.int64).reshape(2, 2)

    @property
    def lipschitz(self):
        a, b, c, d = self.matrix
        return float(max(abs(a) + abs(b), abs(c) + abs(d)))

    @property
    def bound_constant(self):
        """K * (1 / (|lambda_u| - 1) + 1 / (1 - |lambda_s|))."""
        return self.basis_distortion * (
            1.0 / (abs(self.lambda_u) - 1.0) + 1.0 / (1.0 - abs(self.lambda_s))
        )

    @property
    def eigen_constant(self):
        return max(1.0 / (abs(self.lambda_u) - 1.0), 1.0 / (1.0 - abs(self.lambda_s)))

    def shadowing_threshold(self, eps):
        return eps / (2.0 * self.eigen_constant)

    def to_dict(self):
        return {
            'matrix': [list(self.matrix[:2]), list(self.matrix[2:])],
            'lambda_u': self.lambda_u,
            'lambda_s': self.lambda_s,
            'basis_distortion': self.basis_distortion,
        }

    def step_fixed(self, point):
        a, b, c, d = self.matrix
        x, y = point
        return ((a * x + b * y) % SCALE, (c * x + d * y) % SCALE)


def to_fixed(value):
    return round(float(value) * SCALE) % SCALE


def _centered(value):
    """Reduce a fixed-point difference into (-1/2, 1/2]."""
    value %= SCALE
    return value - SCALE if value > HALF else value


@dataclass
class PseudoOrbit:
    """Points x_0..x_n and defects e_0..e_{n-1}, both as fixed-point integers."""

    fixed_points: list
    fixed_defects: list
    delta: float

    @property
    def n(self):
        return len(self.fixed_defects)

    @property
    def points(self):
        return np.array(self.fixed_points, dtype=float) / SCALE

    @property
    def defects(self):
        if not self.fixed_defects:
            return np.zeros((0, 2))
        return np.array(self.fixed_defects, dtype=float) / SCALE

    @property
    def max_defect(self):
        defects = self.defects
        return float(np.abs(defects).max()) if len(defects) else 0.0


@dataclass
class ShadowResult:
    shadow_start: list
    per_step_distance: list
    bound: float
    max_distance: float
    verified_by: str
    precision_loss: bool = False
    points: np.ndarray = field(default=None, repr=False)


def make_pseudo_orbit(auto, start, n, delta, seed=None, defects=None):
    """x_{k+1} = A x_k + e_k mod 1, with seeded uniform or injected defects."""
    if n < 1 or not 0 < delta <= 0.5:
        raise ValueError('Need n >= 1 and 0 < delta <= 1/2.')
    if defects is None:
        rng = np.random.default_rng(seed)
        # Largest fixed-point defect that still reads back as a float below delta
        limit = math.floor(math.nextafter(delta, 0.0) * SCALE)
        drawn = rng.integers(-limit, limit, size=(n, 2), endpoint=True)
        fixed_defects = [(int(ex), int(ey)) for ex, ey in drawn]
    else:
        if len(defects) != n:
            raise ValueError(f'Expected {n} defects, got {len(defects)}.')
        fixed_defects = []
        for k, (ex, ey) in enumerate(defects):
            norm = max(abs(float(ex)), abs(float(ey)))
            if norm >= delta:
                raise DefectTooLarge(k, norm, delta)
            fixed_defects.append((round(float(ex) * SCALE), round(float(ey) * SCALE)))
    points = [(to_fixed(start[0]), to_fixed(start[1]))]
    for ex, ey in fixed_defects:
        x, y = auto.step_fixed(points[-1])
        points.append(((x + ex) % SCALE, (y + ey) % SCALE))
    return PseudoOrbit(points, fixed_defects, float(delta))


def pseudo_orbit_from_points(auto, points, delta):
    """Wrap torus points as a pseudo-orbit, checking every defect is below delta."""
    fixed_points = [(to_fixed(x), to_fixed(y)) for x, y in points]
    fixed_defects = []
    for k in range(len(fixed_points) - 1):
        x, y = auto.step_fixed(fixed_points[k])
        nx, ny = fixed_points[k + 1]
        e = (_centered(nx - x), _centered(ny - y))
        norm = max(abs(e[0]), abs(e[1])) / SCALE
        if norm >= delta:
            raise DefectTooLarge(k, norm, delta)
        fixed_defects.append(e)
    return PseudoOrbit(fixed_points, fixed_defects, float(delta))


def corrections(auto, defects):
    """Corrections c_0..c_n with x_k + c_k a true orbit, in float64."""
    defects = np.asarray(defects, dtype=float).reshape(-1, 2)
    n = len(defects)
    coords = np.linalg.solve(auto.eigenbasis, defects.T).T
    unstable = np.zeros(n + 1)
    stable = np.zeros(n + 1)
    for k in range(n - 1, -1, -1):
        unstable[k] = (unstable[k + 1] + coords[k, 0]) / auto.lambda_u
    for k in range(n):
        stable[k + 1] = auto.lambda_s * stable[k] - coords[k, 1]
    return np.column_stack([unstable, stable]) @ auto.eigenbasis.T


def torus_norm(delta):
    delta = np.abs(np.asarray(delta, dtype=float)) % 1.0
    return np.minimum(delta, 1.0 - delta).max(axis=-1)


def required_digits(auto, n):
    return math.ceil(n * math.log10(abs(auto.lambda_u))) + GUARD_DIGITS


def _forward_shadow(auto, po, digits):
    """Shadow start in extended precision, then exact-enough forward iteration."""
    a, b, c, d = auto.matrix
    with mp.workdps(digits):
        det = a * d - b * c
        trace = a + d
        root = mp.sqrt(trace * trace - 4 * det)
        lambda_u = (trace + root) / 2 if trace > 0 else (trace - root) / 2
        lambda_s = det / lambda_u
        scale = mpf(SCALE)
        # Unstable coordinate of c_0 with respect to (b, lambda_u - a)
        denominator = b * (lambda_s - lambda_u)
        acc = mpf(0)
        for ex, ey in reversed(po.fixed_defects):
            alpha = ((lambda_s - a) * ex - b * ey) / (denominator * scale)
            acc = (acc + alpha) / lambda_u
        x0, y0 = po.fixed_points[0]
        x = mpf(x0) / scale + acc * b
        y = mpf(y0) / scale + acc * (lambda_u - a)
        x -= mp.floor(x)
        y -= mp.floor(y)

        distances = []
        orbit = []
        for k, (px, py) in enumerate(po.fixed_points):
            if k:
                x, y = a * x + b * y, c * x + d * y
                x -= mp.floor(x)
                y -= mp.floor(y)
            dx = abs(x - mpf(px) / scale)
            dy = abs(y - mpf(py) / scale)
            dx = min(dx, 1 - dx)
            dy = min(dy, 1 - dy)
            distances.append(float(max(dx, dy)))
            orbit.append((float(x), float(y)))
    return distances, np.array(orbit)


def shadow(auto, po, strict=False):
    """Shadow a pseudo-orbit; strict mode raises PrecisionLoss instead of falling back."""
    bound = auto.bound_constant * po.delta
    digits = required_digits(auto, po.n)
    limit = getattr(settings, 'SHADOW_MAX_DIGITS', 6000)

    if digits <= limit:
        distances, orbit = _forward_shadow(auto, po, digits)
        verified_by, precision_loss = FORWARD, False
    else:
        if strict:
            raise PrecisionLoss(digits, limit)
        logger.warning(
            'Shadow of %d steps needs %d digits (limit %d); using the correction formula',
            po.n, digits, limit,
        )
        fix = corrections(auto, po.defects)
        points = po.points + fix
        orbit = points - np.floor(points)
        distances = torus_norm(fix).tolist()
        verified_by, precision_loss = CORRECTIONS, True

    max_distance = max(distances) if distances else 0.0
    logger.debug('Shadowed %d steps: max distance %.3g, bound %.3g', po.n, max_distance, bound)
    return ShadowResult(
        shadow_start=[float(v) for v in orbit[0]],
        per_step_distance=distances,
        bound=bound,
        max_distance=max_distance,
        verified_by=verified_by,
        precision_loss=precision_loss,
        points=orbit,
    )


def dense_delta_orbit(graph, start=None):
    """Admissible cell sequence visiting every cell of the graph's image."""
    whole = image(graph, CellSet.full(graph.space))
    if not is_transitive(graph, whole):
        raise NotTransitive('The relation is not transitive on its image.')
    current = int(whole.min() if start is None else start)
    if current not in whole:
        raise NotTransitive(f'Start cell {current} is outside the image.')

    unvisited = whole.bits.copy()
    unvisited[current] = False
    remaining = int(unvisited.sum())
    sequence = [current]
    while remaining:
        row = graph.row(current)
        fresh = row[unvisited[row]]
        if len(fresh):
            path = [int(fresh[0])]
        else:
            order, predecessors = breadth_first_order(graph.matrix, current, directed=True)
            target = int(order[np.argmax(unvisited[order])])
            path = [target]
            while predecessors[path[-1]] != current:
                path.append(int(predecessors[path[-1]]))
            path.reverse()
        for cell in path:
            if unvisited[cell]:
                unvisited[cell] = False
                remaining -= 1
        sequence.extend(path)
        current = path[-1]
    return sequence


@dataclass
class TheoremACertificate:
    matrix: list
    grid: int
    delta: float
    eps: float
    steps: int
    seed: int
    transitive: bool
    orbit_len: int
    orbit_defect_bound: float
    max_shadow_dist: float
    bound: float
    shadowing_delta: float
    defect_within_shadowing_delta: bool
    shadow_within_eps: bool
    verified_by: str
    precision_loss: bool
    net_size: int
    density_ok: bool
    uncovered: list
    note: str
    shadow: ShadowResult = field(default=None, repr=False)


def epsilon_net(eps):
    count = math.ceil(2.0 / eps)
    axis = np.arange(count) / count
    grid_x, grid_y = np.meshgrid(axis, axis)
    return np.column_stack([grid_x.ravel(), grid_y.ravel()])


def _uncovered_block(block, orbit, eps):
    delta = np.abs(block[:, None, :] - orbit[None, :, :]) % 1.0
    nearest = np.minimum(delta, 1.0 - delta).max(axis=2).min(axis=1)
    return block[nearest >= eps].tolist()


def uncovered_points(net, orbit, eps, chunk=256):
    """Net points farther than eps from every orbit point."""
    blocks = [net[lo:lo + chunk] for lo in range(0, len(net), chunk)]
    threads = getattr(settings, 'SETVALUED_THREADS', 1)
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            found = list(pool.map(lambda block: _uncovered_block(block, orbit, eps), blocks))
    else:
        found = [_uncovered_block(block, orbit, eps) for block in blocks]
    return [point for block in found for point in block]


def _certificate_note(within):
    note = (
        'Transitivity, the delta threshold and the grid size are checked before the run. '
        'eps-density of the shadow orbit over the net is the only check made after it '
        'and the only one that can fail the certificate.'
    )
    if not within:
        note += (
            ' The defect bound is not below eps / C, so shadow_within_eps is measured, '
            'not implied.'
        )
    return note


def theorem_a_certificate(auto, grid, delta, eps, steps=None, seed=0):
    """Transitivity of f_delta plus shadowing gives an eps-dense true orbit."""
    threshold = auto.shadowing_threshold(eps)
    if delta > threshold:
        raise ShadowingThresholdExceeded(delta, threshold)
    half_diameter = 0.5 / grid
    if half_diameter >= delta / 2.0:
        raise GridTooCoarse(grid, half_diameter, delta)

    space = torus2(grid, grid)
    base = BaseMap(TORAL, {'matrix': auto.array.tolist()})
    graph = fatten(space, base, delta)

    whole = image(graph, CellSet.full(space))
    rng = np.random.default_rng(seed)
    start = int(rng.choice(whole.ids()))
    cells = dense_delta_orbit(graph, start)
    logger.info('Dense delta-orbit of %d steps covers %d cells', len(cells), len(whole))

    defect_bound = delta + (auto.lipschitz + 1.0) * half_diameter
    po = pseudo_orbit_from_points(auto, space.cell_centers[cells], defect_bound)
    result = shadow(auto, po)

    # Largest defect whose a-priori shadow bound stays below eps
    shadowing_delta = eps / auto.bound_constant
    within = defect_bound < shadowing_delta
    if not within:
        logger.warning(
            'Defect bound %.4f is not below eps / C = %.4f; the shadow distance is measured only',
            defect_bound, shadowing_delta,
        )

    used = len(cells) - 1 if steps is None else min(int(steps), len(cells) - 1)
    net = epsilon_net(eps)
    missing = uncovered_points(net, result.points[:used + 1], eps)
    report = TheoremACertificate(
        matrix=[list(auto.matrix[:2]), list(auto.matrix[2:])],
        grid=grid,
        delta=delta,
        eps=eps,
        steps=used,
        seed=seed,
        transitive=True,
        orbit_len=len(cells),
        orbit_defect_bound=defect_bound,
        max_shadow_dist=result.max_distance,
        bound=result.bound,
        shadowing_delta=shadowing_delta,
        defect_within_shadowing_delta=within,
        shadow_within_eps=result.max_distance < eps,
        verified_by=result.verified_by,
        precision_loss=result.precision_loss,
        net_size=len(net),
        density_ok=not missing,
        uncovered=missing,
        note=_certificate_note(within),
        shadow=result,
    )
    logger.info(
        'Certificate at grid %d, delta %s, eps %s: max shadow %.4f, %d uncovered',
        grid, delta, eps, result.max_distance, len(missing),
    )
    if missing:
        raise DensityNotAchieved(report)
    return report
