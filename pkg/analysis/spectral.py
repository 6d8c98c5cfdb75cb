"""Spectral decomposition of the final recurrent set.

Each final class splits into spatially connected components that the
relation permutes cyclically; the number of components is the period of
the class, and the relation's power of that order is mixing on every
component.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings
from scipy.sparse.csgraph import connected_components, shortest_path

from cells.cellspace import CellSet, spatial_components
from cells.errors import DomainError
from cells.svmap import image

from .recurrence import InvarianceViolation, condense, final_classes

logger = logging.getLogger(__name__)


class ComponentMapNotSingleValued(DomainError):
    def __init__(self, component, targets):
        super().__init__(
            f'Image of component {component} meets components {sorted(targets)}'
        )
        self.component = component
        self.targets = sorted(targets)


class PermutationNotCyclic(DomainError):
    def __init__(self, permutation):
        super().__init__(f'Component permutation {permutation} is not a single cycle')
        self.permutation = permutation


class NotStronglyConnected(DomainError):
    pass


class NoReturnFound(DomainError):
    def __init__(self, cap):
        super().__init__(f'No return within {cap} steps')
        self.cap = cap


@dataclass
class FinalClassReport:
    class_cells: CellSet
    components: list
    period: int
    permutation: list
    transitive: bool
    mixing: bool
    mixing_per_component: bool


@dataclass
class Decomposition:
    classes: list = field(default_factory=list)
    graph_id: str = ''


# -- matrix-level tests ----------------------------------------------------

def _strongly_connected(matrix):
    """One SCC that carries at least one edge."""
    if matrix.shape[0] == 0 or matrix.nnz == 0:
        return False
    n_sccs, _ = connected_components(matrix, directed=True, connection='strong')
    return n_sccs == 1


def _matrix_period(matrix):
    """gcd of cycle lengths, from BFS levels of a strongly connected digraph."""
    levels = shortest_path(matrix, directed=True, unweighted=True, indices=0)
    levels = levels.astype(np.int64)
    coo = matrix.tocoo()
    gaps = np.abs(levels[coo.row] + 1 - levels[coo.col])
    return int(np.gcd.reduce(gaps)) if len(gaps) else 0


def _is_mixing_matrix(matrix):
    return _strongly_connected(matrix) and _matrix_period(matrix) == 1


# -- public tests ----------------------------------------------------------

def is_transitive(graph, domain):
    matrix, _ = graph.restricted_matrix(domain)
    return _strongly_connected(matrix)


def period(graph, domain):
    matrix, _ = graph.restricted_matrix(domain)
    if not _strongly_connected(matrix):
        raise NotStronglyConnected(
            f'Restriction to {len(domain)} cells is not strongly connected'
        )
    return _matrix_period(matrix)


def is_mixing(graph, domain):
    matrix, _ = graph.restricted_matrix(domain)
    return _is_mixing_matrix(matrix)


def return_time(graph, u):
    """Smallest n >= 1 with u inside f^n(u)."""
    if not u:
        raise NoReturnFound(0)
    whole = image(graph, CellSet.full(graph.space))
    steps = period(graph, whole) if is_transitive(graph, whole) else 1
    cap = graph.n_cells * steps
    current = u
    for n in range(1, cap + 1):
        current = image(graph, current)
        if u.issubset(current):
            return n
    raise NoReturnFound(cap)


# -- decomposition ---------------------------------------------------------

def _cyclic_order(graph, components):
    """Reorder components so component k maps onto component k + 1."""
    comp_of = np.full(graph.n_cells, -1, dtype=np.int64)
    for k, component in enumerate(components):
        comp_of[component.ids()] = k

    permutation = []
    for k, component in enumerate(components):
        targets = set(np.unique(comp_of[image(graph, component).ids()]).tolist())
        if -1 in targets:
            raise InvarianceViolation(f'Component {k} maps outside its class', component)
        if len(targets) != 1:
            raise ComponentMapNotSingleValued(k, targets)
        permutation.append(targets.pop())

    order = [0]
    while len(order) < len(components):
        nxt = permutation[order[-1]]
        if nxt == 0:
            break
        order.append(nxt)
    if len(order) != len(components) or permutation[order[-1]] != 0:
        raise PermutationNotCyclic(permutation)
    return [components[k] for k in order]


def _analyse_class(graph, class_cells):
    components = _cyclic_order(graph, spatial_components(graph.space, class_cells))
    n = len(components)

    class_matrix, _ = graph.restricted_matrix(class_cells)
    transitive = _strongly_connected(class_matrix)
    mixing = transitive and _matrix_period(class_matrix) == 1

    if n == 1:
        per_component = [mixing]
    else:
        # The class is invariant, so f^n paths from its cells never leave it
        power = graph.power(n)
        per_component = [
            _is_mixing_matrix(power.restricted_matrix(component)[0]) for component in components
        ]
        if len(set(per_component)) != 1:
            raise InvarianceViolation(
                f'Components of the class at cell {class_cells.min()} disagree on mixing'
            )

    report = FinalClassReport(
        class_cells=class_cells,
        components=components,
        period=n,
        permutation=[(k + 1) % n for k in range(n)],
        transitive=transitive,
        mixing=mixing,
        mixing_per_component=per_component[0],
    )
    logger.debug(
        'Class at cell %d: %d cells, period %d, transitive=%s mixing=%s',
        class_cells.min(), len(class_cells), n, transitive, mixing,
    )
    return report


def decompose(graph):
    classes = final_classes(condense(graph))
    threads = getattr(settings, 'SETVALUED_THREADS', 1)
    if threads > 1 and len(classes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(lambda cls: _analyse_class(graph, cls), classes))
    else:
        reports = [_analyse_class(graph, cls) for cls in classes]
    logger.info(
        'Decomposed %d cells into %d final classes (periods %s)',
        graph.n_cells, len(reports), [r.period for r in reports],
    )
    return Decomposition(classes=reports, graph_id=graph.graph_id)


def decomposition_violations(graph, decomposition):
    """Check the decomposition items verbatim; returns a list of messages."""
    problems = []
    for j, report in enumerate(decomposition.classes):
        cls = report.class_cells
        if image(graph, cls) != cls:
            problems.append(f'class {j}: image is not the class')
        n = report.period
        for k, component in enumerate(report.components):
            if image(graph, component) != report.components[(k + 1) % n]:
                problems.append(f'class {j}: component {k} does not map onto {(k + 1) % n}')
        if not is_transitive(graph, cls):
            problems.append(f'class {j}: restriction is not transitive')
        elif period(graph, cls) != n:
            problems.append(f'class {j}: period {period(graph, cls)} differs from {n}')
        if not report.mixing_per_component:
            problems.append(f'class {j}: power {n} is not mixing on the components')
    return problems
