"""Reachability structure of a transition graph.

x ~> y holds when a trajectory of length >= 1 leads from x to y. The
recurrent set collects the cells with x ~> x; the final recurrent set keeps
those whose every successor leads back. Both are read off the strongly
connected components and their condensation DAG.
"""

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse import csr_array
from scipy.sparse.csgraph import breadth_first_order, connected_components

from cells.cellspace import CellSet
from cells.errors import DomainError
from cells.svmap import image

logger = logging.getLogger(__name__)


class InvarianceViolation(DomainError):
    """A set that should satisfy f(A) = A does not."""

    def __init__(self, message, cells=None):
        super().__init__(message)
        self.cells = cells


@dataclass(frozen=True, eq=False)
class Condensation:
    """SCCs numbered by smallest member cell, with the DAG between them."""

    graph: object
    scc_of: np.ndarray
    dag: csr_array
    nontrivial: np.ndarray

    @property
    def n_sccs(self):
        return len(self.nontrivial)

    @cached_property
    def _member_order(self):
        return np.argsort(self.scc_of, kind='stable')

    @cached_property
    def _member_offsets(self):
        counts = np.bincount(self.scc_of, minlength=self.n_sccs)
        return np.concatenate([[0], np.cumsum(counts)])

    def member_ids(self, scc):
        lo, hi = self._member_offsets[scc], self._member_offsets[scc + 1]
        return self._member_order[lo:hi]

    def members(self, scc):
        return CellSet.from_ids(self.graph.space, self.member_ids(scc))

    def scc_members(self):
        return [self.members(k) for k in range(self.n_sccs)]

    def dag_edges(self, scc):
        return self.dag.indices[self.dag.indptr[scc]:self.dag.indptr[scc + 1]]

    @cached_property
    def terminal(self):
        return np.diff(self.dag.indptr) == 0

    def cells_of(self, scc_mask):
        return CellSet(scc_mask[self.scc_of], self.graph.space.space_id)


def condense(graph):
    n_sccs, labels = connected_components(graph.matrix, directed=True, connection='strong')
    _, first = np.unique(labels, return_index=True)
    relabel = np.empty(n_sccs, dtype=np.int64)
    relabel[np.argsort(first, kind='stable')] = np.arange(n_sccs)
    scc_of = relabel[labels]

    sources = np.repeat(np.arange(graph.n_cells), graph.row_sizes)
    src_scc = scc_of[sources]
    dst_scc = scc_of[graph.indices]

    sizes = np.bincount(scc_of, minlength=n_sccs)
    nontrivial = sizes >= 2
    loops = sources == graph.indices
    nontrivial[scc_of[sources[loops]]] = True

    cross = src_scc != dst_scc
    dag = csr_array(
        (np.ones(int(cross.sum()), dtype=np.int32), (src_scc[cross], dst_scc[cross])),
        shape=(n_sccs, n_sccs),
    )
    dag.sum_duplicates()
    dag.sort_indices()

    logger.debug('Condensed %d cells into %d SCCs', graph.n_cells, n_sccs)
    scc_of.flags.writeable = False
    nontrivial.flags.writeable = False
    return Condensation(graph, scc_of, dag, nontrivial)


def recurrent_set(c):
    return c.cells_of(c.nontrivial)


def final_recurrent_set(c):
    # Terminal SCCs are nontrivial since every row is nonempty
    return c.cells_of(c.terminal)


def final_classes(c):
    classes = []
    for scc in np.flatnonzero(c.terminal):
        members = c.members(scc)
        if image(c.graph, members) != members:
            raise InvarianceViolation(
                f'Final class starting at cell {members.min()} is not invariant', members,
            )
        classes.append(members)
    return classes


def reaches(c, a, b):
    """True iff a path of length >= 1 leads from cell a to cell b."""
    target = c.scc_of[b]
    starts = np.unique(c.scc_of[c.graph.row(a)])
    if target in starts:
        return True
    for start in starts:
        if target in breadth_first_order(c.dag, start, directed=True, return_predecessors=False):
            return True
    return False
