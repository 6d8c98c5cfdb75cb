"""Brute-force reference answers for small graphs.

Everything here works on dense boolean matrices and applies the
definitions directly: a Warshall closure for ~>, closed walks for the
period, and the eventual-hitting definition for mixing. The fast paths in
recurrence and spectral are compared against it item by item.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings

from cells.cellspace import CellSet, interval
from cells.errors import DomainError
from cells.svmap import explicit_graph

from . import recurrence, spectral

logger = logging.getLogger(__name__)

# The eventual-hitting window grows like m**2; larger domains are skipped
MIXING_ORACLE_MAX_CELLS = 12


class TooLargeForOracle(DomainError):
    def __init__(self, n_cells, limit):
        super().__init__(f'Graph has {n_cells} cells; the oracle handles at most {limit}')
        self.n_cells = n_cells
        self.limit = limit


class OracleDisagreement(DomainError):
    def __init__(self, sources):
        super().__init__(f'Fast paths and oracle disagree on {", ".join(sources)}')
        self.sources = sources


@dataclass
class OracleItem:
    name: str
    fast: object
    oracle: object

    @property
    def agree(self):
        return self.fast == self.oracle


@dataclass
class OracleReport:
    source: str
    n_cells: int
    items: list = field(default_factory=list)

    @property
    def agree(self):
        return all(item.agree for item in self.items)

    def disagreements(self):
        return [item.name for item in self.items if not item.agree]


def dense(graph):
    matrix = np.zeros((graph.n_cells, graph.n_cells), dtype=bool)
    for c in range(graph.n_cells):
        matrix[c, graph.row(c)] = True
    return matrix


def closure(adjacency):
    """reach[i, j] iff a path of length >= 1 leads from i to j."""
    reach = adjacency.copy()
    for k in range(len(reach)):
        reach |= reach[:, k:k + 1] & reach[k:k + 1, :]
    return reach


def omega(reach):
    return np.flatnonzero(np.diag(reach)).tolist()


def omega_final(reach):
    # x is final when every y it reaches leads back to x
    returns = ~reach | reach.T
    return np.flatnonzero(returns.all(axis=1)).tolist()


def classes(reach):
    final = omega_final(reach)
    seen = set()
    result = []
    for x in final:
        if x in seen:
            continue
        members = [y for y in final if y == x or (reach[x, y] and reach[y, x])]
        seen.update(members)
        result.append(sorted(members))
    return sorted(result)


def transitive(adjacency):
    return bool(len(adjacency)) and bool(closure(adjacency).all())


def closed_walk_period(adjacency):
    """gcd of closed-walk lengths at cell 0 up to 3n; 0 when there are none."""
    n = len(adjacency)
    frontier = np.zeros(n, dtype=bool)
    frontier[0] = True
    step = adjacency.astype(np.int64)
    gcd = 0
    for length in range(1, 3 * n + 1):
        frontier = (frontier.astype(np.int64) @ step) > 0
        if frontier[0]:
            gcd = math.gcd(gcd, length)
    return gcd


def eventually_hitting(adjacency):
    """f^n(a) meets b for every pair and every n in the Wielandt window."""
    m = len(adjacency)
    if m == 0:
        return False
    start = (m - 1) ** 2 + 1
    step = adjacency.astype(np.int64)
    power = np.eye(m, dtype=np.int64)
    for n in range(1, start + m * m + 1):
        power = np.minimum(power @ step, 1)
        if n >= start and not power.all():
            return False
    return True


def _restrict(adjacency, ids):
    return adjacency[np.ix_(ids, ids)]


def check_graph(graph, source=''):
    limit = getattr(settings, 'ORACLE_MAX_CELLS', 500)
    if graph.n_cells > limit:
        raise TooLargeForOracle(graph.n_cells, limit)

    adjacency = dense(graph)
    reach = closure(adjacency)
    condensation = recurrence.condense(graph)
    fast_classes = recurrence.final_classes(condensation)
    oracle_classes = classes(reach)

    report = OracleReport(source=source, n_cells=graph.n_cells)
    report.items.append(OracleItem(
        'omega', recurrence.recurrent_set(condensation).to_list(), omega(reach),
    ))
    report.items.append(OracleItem(
        'omega_final', recurrence.final_recurrent_set(condensation).to_list(), omega_final(reach),
    ))
    report.items.append(OracleItem(
        'classes', [cls.to_list() for cls in fast_classes], oracle_classes,
    ))
    report.items.append(OracleItem(
        'transitive', spectral.is_transitive(graph, CellSet.full(graph.space)), transitive(adjacency),
    ))

    fast_periods = [spectral.period(graph, cls) for cls in fast_classes]
    oracle_periods = [closed_walk_period(_restrict(adjacency, ids)) for ids in oracle_classes]
    report.items.append(OracleItem('period', fast_periods, oracle_periods))

    small = [ids for ids in oracle_classes if len(ids) <= MIXING_ORACLE_MAX_CELLS]
    report.items.append(OracleItem(
        'mixing',
        [spectral.is_mixing(graph, CellSet.from_ids(graph.space, ids)) for ids in small],
        [eventually_hitting(_restrict(adjacency, ids)) for ids in small],
    ))

    if report.agree:
        logger.debug('Oracle agrees on %s (%d cells)', source, graph.n_cells)
    else:
        logger.warning('Oracle disagrees on %s: %s', source, report.disagreements())
    return report


def random_explicit_graph(rng, max_cells=12):
    """Seeded random explicit graph on an interval with at most max_cells cells."""
    n = int(rng.integers(1, max_cells + 1))
    density = rng.uniform(0.1, 0.5)
    rows = []
    for _ in range(n):
        row = np.flatnonzero(rng.random(n) < density)
        if len(row) == 0:
            row = np.array([rng.integers(n)])
        rows.append(row.tolist())
    return explicit_graph(interval(0.0, 1.0, n), rows)
