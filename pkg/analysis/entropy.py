"""Topological entropy of a transition graph.

Path counts are exact big integers. The growth rate is the log of the
spectral radius of the 0/1 transition matrix. Separated and spanning sets
of admissible sequences give a lower and an upper bracket at a metric
resolution epsilon, with orbit distance the max over steps of cell-center
distances.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings
from scipy.sparse import csr_array
from scipy.sparse.csgraph import connected_components

from cells.cellspace import TORUS2, SpaceMismatch, interval, torus2
from cells.errors import DomainError
from cells.svmap import TORAL, fatten

logger = logging.getLogger(__name__)

PATH_COUNT = 'count'
SPECTRAL_RADIUS = 'spectral'
SEPARATED = 'separated'
SPANNING = 'spanning'
METHODS = [PATH_COUNT, SPECTRAL_RADIUS, SEPARATED, SPANNING]

# Points of a separated set inside one row sit at least two cells apart
PACKING_FACTOR = 2

# Upper bound on pair distances held in memory while building a cover relation
COVER_BLOCK_ENTRIES = 1 << 22


class BudgetExceeded(DomainError):
    def __init__(self, budget, partial):
        super().__init__(f'Enumeration budget of {budget} sequences exhausted (partial count {partial})')
        self.budget = budget
        self.partial = partial


class RegionTooSmall(DomainError):
    def __init__(self, size, m):
        super().__init__(f'Region has {size} cells, cannot place {m} separated points')
        self.size = size
        self.m = m


@dataclass
class EntropyReport:
    method: str
    n_max: int
    values: list
    rate: float
    epsilon: float = None
    reduced_precision: bool = False
    domain: list = None


@dataclass
class SeparationResult:
    epsilon0: float
    target: float
    cells: list
    meets_target: bool


@dataclass
class TheoremCRow:
    subdivisions: int
    min_row_size: int
    m: int
    log_m: float
    growth_rate: float
    epsilon0: float
    reduced_precision: bool = False


@dataclass
class TheoremCStudy:
    base: dict
    epsilon: float
    rows: list = field(default_factory=list)


# -- path counting -----------------------------------------------------------

def count_series(graph, n, domain=None):
    """Exact counts of admissible sequences of length 1..n."""
    if n < 1:
        raise ValueError('Sequences have length at least 1.')
    matrix = graph.matrix if domain is None else graph.restricted_matrix(domain)[0]
    indptr, indices = matrix.indptr, matrix.indices
    sizes = np.diff(indptr)

    counts = np.ones(matrix.shape[0], dtype=object)
    series = [int(sum(counts.tolist()))]
    for _ in range(n - 1):
        if len(indices) == 0:
            counts = np.zeros(matrix.shape[0], dtype=object)
        else:
            # Trailing zero keeps every row start a valid index
            gathered = np.append(counts[indices], 0).astype(object)
            summed = np.add.reduceat(gathered, indptr[:-1])
            summed[sizes == 0] = 0
            counts = summed
        series.append(int(sum(counts.tolist())))
    return series


def count_orbits(graph, n, domain=None):
    return count_series(graph, n, domain)[-1]


# -- spectral radius ---------------------------------------------------------

def _perron_root(block):
    """Spectral radius of an irreducible block by power iteration on A + I."""
    tol = getattr(settings, 'GROWTH_RATE_TOLERANCE', 1e-10)
    max_iterations = getattr(settings, 'GROWTH_RATE_MAX_ITERATIONS', 10000)
    block = block.astype(np.float64)
    x = np.full(block.shape[0], 1.0 / block.shape[0])
    estimate = None
    for _ in range(max_iterations):
        y = block @ x + x
        quotient = float(x @ y) / float(x @ x)
        x = y / y.sum()
        if estimate is not None and abs(quotient - estimate) < tol:
            return quotient - 1.0, True
        estimate = quotient
    return estimate - 1.0, False


def _spectral_radius(matrix):
    """Max Perron root over the strongly connected blocks; (radius, converged)."""
    n_sccs, labels = connected_components(matrix, directed=True, connection='strong')
    order = np.argsort(labels, kind='stable')
    bounds = np.concatenate([[0], np.cumsum(np.bincount(labels, minlength=n_sccs))])
    diagonal = matrix.diagonal()
    radius, converged = 0.0, True
    for label in range(n_sccs):
        ids = order[bounds[label]:bounds[label + 1]]
        if len(ids) == 1:
            if diagonal[ids[0]]:
                radius = max(radius, 1.0)
            continue
        root, ok = _perron_root(matrix[ids, :][:, ids])
        converged = converged and ok
        radius = max(radius, root)
    return radius, converged


def growth_rate_estimate(graph, domain=None):
    """(rate, converged) with the rate the log of the spectral radius."""
    matrix = graph.matrix if domain is None else graph.restricted_matrix(domain)[0]
    radius, converged = _spectral_radius(matrix)
    if not converged:
        counts = count_series(graph, 64, domain)
        if counts[31] == 0 or counts[63] == 0:
            return 0.0, False
        rate = (math.log(counts[63]) - math.log(counts[31])) / 32
        logger.warning('Power iteration did not converge; using path-count ratio %.6f', rate)
        return rate, False
    # No cycles at all means no long orbits; reported as zero
    return (math.log(radius) if radius > 0 else 0.0), True


def growth_rate(graph, domain=None):
    rate, _ = growth_rate_estimate(graph, domain)
    return rate


# -- metric brackets ---------------------------------------------------------

def _sequences(graph, n, domain=None):
    """Admissible sequences of length n in lexicographic order."""
    starts = range(graph.n_cells) if domain is None else domain.ids().tolist()
    allowed = None if domain is None else set(domain.ids().tolist())
    rows = [graph.row(c).tolist() for c in range(graph.n_cells)]
    if allowed is not None:
        rows = [[d for d in row if d in allowed] for row in rows]
    for start in starts:
        stack = [(start, [start])]
        while stack:
            cell, path = stack.pop()
            if len(path) == n:
                yield path
                continue
            for nxt in reversed(rows[cell]):
                stack.append((nxt, path + [nxt]))


def _cross_distances(space, left, right):
    """Max-over-steps center distance between every pair of sequences."""
    centers = space.cell_centers
    delta = np.abs(centers[left][:, None, ...] - centers[right][None, ...])
    if space.kind == TORUS2:
        delta = delta % 1.0
        delta = np.minimum(delta, 1.0 - delta).max(axis=-1)
    return delta.max(axis=-1)


def _orbit_distances(space, accepted, sequence):
    return _cross_distances(space, accepted, np.asarray(sequence)[None, :])[:, 0]


def _far_from_all(distances, epsilon):
    return bool(np.all(distances >= epsilon))


def _resolve_budget(n, epsilon, budget):
    if n < 1 or epsilon <= 0:
        raise ValueError('Need n >= 1 and epsilon > 0.')
    if budget is None:
        budget = getattr(settings, 'ENTROPY_ENUMERATION_BUDGET', 200000)
    return budget


def _greedy_separated(graph, n, epsilon, budget, domain):
    budget = _resolve_budget(n, epsilon, budget)
    space = graph.space
    chosen = np.empty((min(budget, 1024), n), dtype=np.int64)
    k = 0
    for examined, sequence in enumerate(_sequences(graph, n, domain)):
        if examined >= budget:
            raise BudgetExceeded(budget, k)
        if k == 0 or _far_from_all(_orbit_distances(space, chosen[:k], sequence), epsilon):
            if k == len(chosen):
                chosen = np.concatenate([chosen, np.empty_like(chosen)])
            chosen[k] = sequence
            k += 1
    return k


def _all_sequences(graph, n, budget, domain):
    sequences = []
    for examined, sequence in enumerate(_sequences(graph, n, domain)):
        if examined >= budget:
            raise BudgetExceeded(budget, examined)
        sequences.append(sequence)
    return np.array(sequences, dtype=np.int64).reshape(len(sequences), n)


def _cover_matrix(space, sequences, epsilon):
    """Symmetric 0/1 matrix of sequence pairs closer than epsilon."""
    total, n = sequences.shape
    chunk = max(1, COVER_BLOCK_ENTRIES // max(1, total * n))
    rows, cols = [], []
    for lo in range(0, total, chunk):
        near = _cross_distances(space, sequences[lo:lo + chunk], sequences) < epsilon
        r, c = np.nonzero(near)
        rows.append(r + lo)
        cols.append(c)
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    return csr_array((np.ones(len(rows), dtype=np.int64), (rows, cols)), shape=(total, total))


def _greedy_cover(graph, n, epsilon, budget, domain):
    budget = _resolve_budget(n, epsilon, budget)
    sequences = _all_sequences(graph, n, budget, domain)
    if len(sequences) == 0:
        return 0
    cover = _cover_matrix(graph.space, sequences, epsilon)
    # gains[i] counts the uncovered sequences within epsilon of sequence i
    gains = np.diff(cover.indptr).astype(np.int64)
    uncovered = np.ones(len(sequences), dtype=bool)
    centres = 0
    while uncovered.any():
        best = int(np.argmax(gains))
        fresh = cover.indices[cover.indptr[best]:cover.indptr[best + 1]]
        fresh = fresh[uncovered[fresh]]
        uncovered[fresh] = False
        gains -= np.asarray(cover[fresh].sum(axis=0)).ravel().astype(np.int64)
        centres += 1
    return centres


def separated_lower(graph, space, n, epsilon, budget=None, domain=None):
    """Size of a greedy (n, epsilon)-separated set of admissible sequences.

    Kept sequences sit pairwise at distance >= epsilon.
    """
    _check_space(graph, space)
    return _greedy_separated(graph, n, epsilon, budget, domain)


def spanning_upper(graph, space, n, epsilon, budget=None, domain=None):
    """Size of a greedy (n, epsilon)-spanning set of admissible sequences.

    Centres are picked one at a time, each covering the most sequences
    not yet within distance < epsilon of an earlier centre. Building the
    cover relation compares every pair of enumerated sequences.
    """
    _check_space(graph, space)
    return _greedy_cover(graph, n, epsilon, budget, domain)


def _check_space(graph, space):
    if graph.space.space_id != space.space_id:
        raise SpaceMismatch(f'Graph does not live on space {space.space_id}')


# -- growth study ------------------------------------------------------------

def separation_radius(space, region, m):
    """Pick m cells of the region far apart by greedy farthest-point selection.

    epsilon0 is the largest float below the smallest pairwise center
    distance, so the picked cells are strictly more than epsilon0 apart.
    """
    ids = region.ids()
    if m < 1 or len(ids) < m:
        raise RegionTooSmall(len(ids), m)
    distances = space.center_distances(ids, ids)
    diameter = float(distances.max())
    target = diameter / (m + 1)
    if m == 1:
        return SeparationResult(diameter / 2.0, target, [int(ids[0])], True)

    picked = [0]
    nearest = distances[0].copy()
    while len(picked) < m:
        nxt = int(np.argmax(nearest))
        picked.append(nxt)
        nearest = np.minimum(nearest, distances[nxt])
    sub = distances[np.ix_(picked, picked)]
    achieved = float(sub[~np.eye(m, dtype=bool)].min())
    return SeparationResult(
        epsilon0=math.nextafter(achieved, 0.0),
        target=target,
        cells=sorted(int(ids[p]) for p in picked),
        meets_target=achieved >= target,
    )


def _study_space(base, subdivisions, pieces):
    if base.kind == TORAL:
        return torus2(subdivisions, subdivisions)
    a, b = pieces
    return interval(a, b, subdivisions)


def theorem_c_study(base, epsilon, subdivisions, pieces=(0.0, 1.0)):
    """Growth rate against the packing lower bound log m per subdivision count."""
    study = TheoremCStudy(base=base.to_dict(), epsilon=epsilon)
    for count in subdivisions:
        space = _study_space(base, count, pieces)
        graph = fatten(space, base, epsilon)
        sizes = graph.row_sizes
        tightest = int(np.argmin(sizes))
        min_row = int(sizes[tightest])
        m = max(1, math.ceil(min_row / PACKING_FACTOR))
        separation = separation_radius(space, graph.row_set(tightest), m)
        rate, converged = growth_rate_estimate(graph)
        study.rows.append(TheoremCRow(
            subdivisions=count,
            min_row_size=min_row,
            m=m,
            log_m=math.log(m),
            growth_rate=rate,
            epsilon0=separation.epsilon0,
            reduced_precision=not converged,
        ))
        logger.info('Subdivisions %d: min row %d, m=%d, growth %.6f', count, min_row, m, rate)
    return study


# -- reports -----------------------------------------------------------------

def entropy_report(graph, method, n, epsilon=None, budget=None, domain=None):
    domain_ids = None if domain is None else domain.to_list()
    if method == PATH_COUNT:
        values = count_series(graph, n, domain)
        rate = math.log(values[-1]) / n if values[-1] > 0 else 0.0
        return EntropyReport(method, n, values, rate, domain=domain_ids)
    if method == SPECTRAL_RADIUS:
        rate, converged = growth_rate_estimate(graph, domain)
        return EntropyReport(
            method, n, [rate], rate, reduced_precision=not converged, domain=domain_ids,
        )
    bracket = separated_lower if method == SEPARATED else spanning_upper
    values = [bracket(graph, graph.space, k, epsilon, budget, domain) for k in range(1, n + 1)]
    rate = math.log(values[-1]) / n if values[-1] > 0 else 0.0
    return EntropyReport(method, n, values, rate, epsilon=epsilon, domain=domain_ids)