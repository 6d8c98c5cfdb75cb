"""Combinatorial set-valued maps on a cell space.

A TransitionGraph stores, for every cell, the set of cells its image may
meet, in compressed sparse row form. Graphs come either from an explicit
list of rows or from the epsilon-fattening of a single-valued base map, in
which case every row is an outer enclosure of B_eps(F(box)).
"""

import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from functools import cached_property

import numpy as np
from django.conf import settings
from scipy.sparse import csr_array

from .cellspace import TORUS2, CellSet
from .errors import DomainError

logger = logging.getLogger(__name__)

IDENTITY = 'identity'
AFFINE = 'affine'
PIECEWISE_AFFINE = 'piecewise_affine'
DOUBLING = 'doubling'
LOGISTIC = 'logistic'
TORAL = 'toral'

MAP_KINDS = [
    (IDENTITY, 'Identity'),
    (AFFINE, 'Affine x -> a x + b'),
    (PIECEWISE_AFFINE, 'Continuous piecewise affine'),
    (DOUBLING, 'Doubling x -> 2x mod 1'),
    (LOGISTIC, 'Logistic x -> a x (1 - x)'),
    (TORAL, 'Linear toral automorphism'),
]

EXPLICIT_SOURCE = {'kind': 'explicit'}


class InvalidBaseMap(DomainError):
    """Raised when base map parameters are inconsistent."""


class EmptyImage(DomainError):
    """Raised when an enclosure leaves the space, so a row would be empty."""

    def __init__(self, cell):
        super().__init__(f'Cell {cell} has an empty image; the base map leaves the space')
        self.cell = cell


class EmptyRow(DomainError):
    def __init__(self, row):
        super().__init__(f'Row {row} is empty; every cell needs a nonempty image')
        self.row = row


class IdOutOfRange(DomainError):
    def __init__(self, row, cell_id, n_cells):
        super().__init__(f'Row {row} names cell {cell_id}, but the space has {n_cells} cells')
        self.row = row
        self.cell_id = cell_id


class RowCountMismatch(DomainError):
    def __init__(self, n_rows, n_cells):
        super().__init__(f'Got {n_rows} rows for a space with {n_cells} cells')
        self.n_rows = n_rows
        self.n_cells = n_cells


class BaseMap:
    """A single-valued map F together with a Lipschitz bound L."""

    def __init__(self, kind, parameters=None, lipschitz=None):
        self.kind = kind
        self.parameters = dict(parameters or {})
        self.supplied_lipschitz = None if lipschitz is None else float(lipschitz)
        self._validate()

    def _validate(self):
        p = self.parameters
        if self.kind == TORAL:
            matrix = np.asarray(p.get('matrix'), dtype=float)
            if matrix.shape != (2, 2) or not np.all(matrix == np.round(matrix)):
                raise InvalidBaseMap('A toral automorphism needs an integer 2x2 matrix.')
            det = round(matrix[0, 0] * matrix[1, 1] - matrix[0, 1] * matrix[1, 0])
            if abs(det) != 1:
                raise InvalidBaseMap(f'Toral automorphisms need determinant +-1, got {det}.')
            self.matrix = matrix.astype(np.int64)
        elif self.kind == AFFINE:
            self.slope = float(p.get('slope', 1.0))
            self.intercept = float(p.get('intercept', 0.0))
        elif self.kind == PIECEWISE_AFFINE:
            self.breakpoints = np.asarray(p.get('breakpoints', []), dtype=float)
            self.values = np.asarray(p.get('values', []), dtype=float)
            if len(self.breakpoints) < 2 or len(self.breakpoints) != len(self.values):
                raise InvalidBaseMap('Piecewise affine maps need matching breakpoints and values.')
            if np.any(np.diff(self.breakpoints) <= 0):
                raise InvalidBaseMap('Breakpoints must be strictly increasing.')
        elif self.kind == LOGISTIC:
            self.a = float(p.get('a', 4.0))
        elif self.kind not in (IDENTITY, DOUBLING):
            raise InvalidBaseMap(f'Unknown base map kind: {self.kind!r}')

    @property
    def discontinuities(self):
        """Interior points where F jumps; enclosures are split there."""
        if self.kind == DOUBLING:
            return (0.5,)
        return ()

    def check_space(self, space):
        if (self.kind == TORAL) != (space.kind == TORUS2) and self.kind != IDENTITY:
            raise InvalidBaseMap(f'A {self.kind} map cannot act on a {space.kind} space.')

    def derived_lipschitz(self, space):
        if self.kind == IDENTITY:
            return 1.0
        if self.kind == AFFINE:
            return abs(self.slope)
        if self.kind == PIECEWISE_AFFINE:
            return float(np.max(np.abs(np.diff(self.values) / np.diff(self.breakpoints))))
        if self.kind == DOUBLING:
            return 2.0
        if self.kind == LOGISTIC:
            ends = np.array([x for piece in space.pieces for x in piece])
            return abs(self.a) * float(np.max(np.abs(1.0 - 2.0 * ends)))
        # Max-norm operator norm of the integer matrix
        return float(np.abs(self.matrix).sum(axis=1).max())

    def lipschitz_on(self, space):
        derived = self.derived_lipschitz(space)
        if self.supplied_lipschitz is None:
            return derived
        if self.supplied_lipschitz < derived:
            raise InvalidBaseMap(
                f'Supplied Lipschitz bound {self.supplied_lipschitz} is below {derived}.'
            )
        return self.supplied_lipschitz

    def evaluate(self, points):
        x = np.asarray(points, dtype=float)
        if self.kind == IDENTITY:
            return x.copy()
        if self.kind == AFFINE:
            return self.slope * x + self.intercept
        if self.kind == PIECEWISE_AFFINE:
            return np.interp(x, self.breakpoints, self.values)
        if self.kind == DOUBLING:
            # x = 1 is sent to 1 (= 0 on the circle) so the last cell stays continuous
            y = np.mod(2.0 * x, 1.0)
            return np.where(x >= 1.0, 1.0, y)
        if self.kind == LOGISTIC:
            return self.a * x * (1.0 - x)
        image = x @ self.matrix.T.astype(float)
        return image - np.floor(image)

    def to_dict(self):
        data = {'kind': self.kind, 'parameters': self.parameters}
        if self.supplied_lipschitz is not None:
            data['lipschitz'] = self.supplied_lipschitz
        return data

    @classmethod
    def from_dict(cls, data):
        return cls(data['kind'], data.get('parameters') or {}, data.get('lipschitz'))

    def __repr__(self):
        return f'BaseMap({self.kind!r}, {self.parameters!r})'


class TransitionGraph:
    """A cell-level relation c -> Im(c) in canonical CSR layout.

    Rows are nonempty and their column ids strictly increase.
    """

    def __init__(self, space, indptr, indices, epsilon=0.0, source=None):
        self.space = space
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.epsilon = float(epsilon)
        self.source = source or dict(EXPLICIT_SOURCE)
        self._validate()
        self.indptr.flags.writeable = False
        self.indices.flags.writeable = False

    def _validate(self):
        n = self.space.n_cells
        if len(self.indptr) != n + 1:
            raise RowCountMismatch(len(self.indptr) - 1, n)
        sizes = np.diff(self.indptr)
        if np.any(sizes <= 0):
            raise EmptyRow(int(np.flatnonzero(sizes <= 0)[0]))
        if len(self.indices) and (self.indices.min() < 0 or self.indices.max() >= n):
            bad = int(np.flatnonzero((self.indices < 0) | (self.indices >= n))[0])
            row = int(np.searchsorted(self.indptr, bad, side='right') - 1)
            raise IdOutOfRange(row, int(self.indices[bad]), n)
        steps = np.diff(self.indices)
        row_starts = np.zeros(len(self.indices), dtype=bool)
        row_starts[self.indptr[:-1]] = True
        if np.any(steps[~row_starts[1:]] <= 0):
            raise ValueError('Row column ids must be strictly increasing.')

    @classmethod
    def from_rows(cls, space, rows, epsilon=0.0, source=None):
        rows = [np.unique(np.asarray(row, dtype=np.int64)) for row in rows]
        sizes = np.array([len(row) for row in rows], dtype=np.int64)
        indptr = np.concatenate([[0], np.cumsum(sizes)])
        indices = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
        return cls(space, indptr, indices, epsilon, source)

    @property
    def n_cells(self):
        return self.space.n_cells

    @property
    def n_edges(self):
        return int(len(self.indices))

    @property
    def is_explicit(self):
        return self.source.get('kind') == 'explicit'

    @cached_property
    def graph_id(self):
        digest = hashlib.sha256(self.space.space_id.encode())
        digest.update(self.indptr.astype('<u4').tobytes())
        digest.update(self.indices.astype('<u4').tobytes())
        return digest.hexdigest()[:16]

    @cached_property
    def row_sizes(self):
        return np.diff(self.indptr)

    def row(self, cell):
        return self.indices[self.indptr[cell]:self.indptr[cell + 1]]

    def row_set(self, cell):
        return CellSet.from_ids(self.space, self.row(cell))

    def rows(self):
        return [self.row(c).tolist() for c in range(self.n_cells)]

    @cached_property
    def matrix(self):
        """0/1 transition matrix as a scipy CSR array."""
        data = np.ones(len(self.indices), dtype=np.int32)
        return csr_array((data, self.indices, self.indptr), shape=(self.n_cells, self.n_cells))

    def restricted_matrix(self, domain):
        """Transition matrix of the relation restricted to a cell set, plus the ids."""
        ids = domain.ids()
        return self.matrix[ids, :][:, ids], ids

    def power(self, n):
        """The relation of f^n as a new graph."""
        if n < 1:
            raise ValueError('Graph powers start at 1.')
        if n == 1:
            return self
        result = self.matrix
        for _ in range(n - 1):
            result = result @ self.matrix
            result.data[:] = 1
        result = csr_array(result)
        result.sort_indices()
        source = {'kind': 'power', 'exponent': n, 'base': self.source}
        return TransitionGraph(self.space, result.indptr, result.indices, self.epsilon, source)

    def to_dict(self):
        return {
            'space': self.space.to_dict(),
            'epsilon': self.epsilon,
            'source': self.source,
            'rows': self.rows(),
        }

    def __eq__(self, other):
        if not isinstance(other, TransitionGraph):
            return NotImplemented
        return (
            self.space == other.space
            and self.epsilon == other.epsilon
            and self.source == other.source
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )

    def __repr__(self):
        return (
            f'TransitionGraph({self.space.kind}, cells={self.n_cells}, '
            f'edges={self.n_edges}, source={self.source.get("kind")})'
        )


def explicit_graph(space, rows):
    """Canonical graph from a list of rows of cell ids."""
    if len(rows) != space.n_cells:
        raise RowCountMismatch(len(rows), space.n_cells)
    for r, row in enumerate(rows):
        if len(row) == 0:
            raise EmptyRow(r)
        for cell_id in row:
            if not 0 <= int(cell_id) < space.n_cells:
                raise IdOutOfRange(r, int(cell_id), space.n_cells)
    return TransitionGraph.from_rows(space, rows, 0.0, dict(EXPLICIT_SOURCE))


def _sub_boxes(space, cell, cuts):
    """Split an interval cell at the cut points strictly inside it."""
    lo, hi = space.cell_box(cell)
    inner = [d for d in cuts if lo < d < hi]
    edges = [lo, *inner, hi]
    return [((a + b) / 2.0, (b - a) / 2.0) for a, b in zip(edges[:-1], edges[1:])]


def fatten(space, base, epsilon):
    """Outer enclosure of the epsilon-fattening x -> B_eps(F(x)).

    Row c is the set of cells meeting B(F(center), eps + L * radius(c)),
    which covers B_eps(F(x)) for every x in the cell.
    """
    if epsilon <= 0:
        raise ValueError('The fattening radius must be positive.')
    base.check_space(space)
    lipschitz = base.lipschitz_on(space)
    images = base.evaluate(space.cell_centers)
    radii = epsilon + lipschitz * space.cell_radii
    cuts = base.discontinuities if not space.is_torus else ()
    split_cells = set()
    for d in cuts:
        for piece, (a, b) in enumerate(space.pieces):
            if a < d < b:
                split_cells.add(space.cell_of(d))
                split_cells.add(space.cell_of(math.nextafter(d, -math.inf)))

    rows = [None] * space.n_cells

    def enclose(cells):
        for c in cells:
            if c in split_cells:
                parts = [
                    space.ball_indices(base.evaluate(mid), epsilon + lipschitz * half)
                    for mid, half in _sub_boxes(space, c, cuts)
                ]
                rows[c] = np.unique(np.concatenate(parts))
            else:
                rows[c] = space.ball_indices(images[c], radii[c])

    threads = getattr(settings, 'SETVALUED_THREADS', 1)
    chunks = np.array_split(np.arange(space.n_cells), max(1, threads))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(enclose, chunks))
    else:
        enclose(chunks[0])

    for c, row in enumerate(rows):
        if len(row) == 0:
            raise EmptyImage(c)

    graph = TransitionGraph.from_rows(space, rows, epsilon, base.to_dict())
    logger.info(
        'Fattened %s on %s cells at eps=%s: %d edges (L=%s)',
        base.kind, space.n_cells, epsilon, graph.n_edges, lipschitz,
    )
    return graph


def image(graph, cells):
    """Union of the rows of the given cells."""
    if not cells:
        return CellSet.empty(graph.space)
    hits = graph.matrix.T @ cells.bits.astype(np.int32)
    return CellSet(hits > 0, graph.space.space_id)


def iterate_image(graph, cells, n):
    if n < 0:
        raise ValueError('Iteration count must be non-negative.')
    current = cells
    for _ in range(n):
        current = image(graph, current)
    return current


def forward_orbit(graph, cells):
    """Union of f^n(cells) over n >= 1."""
    reached = CellSet.empty(graph.space)
    frontier = image(graph, cells)
    while not frontier.issubset(reached):
        reached = reached | frontier
        frontier = image(graph, frontier) - reached
        if not frontier:
            break
    return reached
