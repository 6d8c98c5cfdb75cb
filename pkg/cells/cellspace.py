"""Finite cell decompositions of the compact spaces the analysis runs on.

Three kinds of space are supported: a closed interval, a finite disjoint union
of closed intervals and the flat 2-torus [0, 1)^2. Cells are half-open boxes,
except that the last cell of every interval piece is closed, so each point of
the space lies in exactly one cell.

Cell ids are contiguous integers starting at 0, ordered piece by piece and
left to right inside a piece (row-major, x fastest, on the torus). That
ordering is part of the file format.
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse import coo_array
from scipy.sparse.csgraph import connected_components

from .errors import DomainError

logger = logging.getLogger(__name__)

INTERVAL = 'interval'
INTERVAL_UNION = 'interval_union'
TORUS2 = 'torus2'

SPACE_KINDS = [
    (INTERVAL, 'Interval'),
    (INTERVAL_UNION, 'Disjoint union of intervals'),
    (TORUS2, 'Flat 2-torus'),
]


class PointOutsideSpace(DomainError):
    """Raised when a point lies in no piece of the space."""

    def __init__(self, point):
        super().__init__(f'Point {point!r} lies outside the space')
        self.point = point


class SpaceMismatch(DomainError):
    """Raised when cell sets of two different spaces are combined."""


@dataclass(frozen=True)
class CellSpace:
    kind: str
    pieces: tuple = ()
    subdivisions: tuple = ()

    def __post_init__(self):
        if self.kind == TORUS2:
            if len(self.subdivisions) != 2 or min(self.subdivisions) < 1:
                raise ValueError('A torus grid needs a positive width and height.')
            if self.pieces:
                raise ValueError('A torus has no interval pieces.')
            return
        if self.kind not in (INTERVAL, INTERVAL_UNION):
            raise ValueError(f'Unknown space kind: {self.kind!r}')
        if not self.pieces or len(self.pieces) != len(self.subdivisions):
            raise ValueError('Every interval piece needs a subdivision count.')
        if self.kind == INTERVAL and len(self.pieces) != 1:
            raise ValueError('An interval space has exactly one piece.')
        previous_end = -math.inf
        for (a, b), n in zip(self.pieces, self.subdivisions):
            if not a < b:
                raise ValueError(f'Piece [{a}, {b}] is empty.')
            if not a > previous_end:
                raise ValueError('Pieces must be sorted and pairwise disjoint.')
            if n < 1:
                raise ValueError('Every piece needs at least one cell.')
            previous_end = b

    # -- description -----------------------------------------------------

    @property
    def is_torus(self):
        return self.kind == TORUS2

    @property
    def wraparound(self):
        return (True, True) if self.is_torus else ()

    @cached_property
    def n_cells(self):
        if self.is_torus:
            return self.subdivisions[0] * self.subdivisions[1]
        return int(sum(self.subdivisions))

    @cached_property
    def piece_offsets(self):
        """First cell id of every interval piece."""
        return np.concatenate([[0], np.cumsum(self.subdivisions)[:-1]]).astype(np.int64)

    @cached_property
    def cell_widths(self):
        if self.is_torus:
            width, height = self.subdivisions
            return np.array([1.0 / width, 1.0 / height])
        return np.array([(b - a) / n for (a, b), n in zip(self.pieces, self.subdivisions)])

    @property
    def cell_size(self):
        return float(self.cell_widths.max())

    @cached_property
    def diameter(self):
        if self.is_torus:
            return 0.5
        return float(self.pieces[-1][1] - self.pieces[0][0])

    def to_dict(self):
        if self.is_torus:
            return {'kind': self.kind, 'grid': list(self.subdivisions)}
        return {
            'kind': self.kind,
            'pieces': [[a, b] for a, b in self.pieces],
            'subdivisions': list(self.subdivisions),
        }

    @classmethod
    def from_dict(cls, data):
        if data['kind'] == TORUS2:
            return torus2(*data['grid'])
        pieces = tuple((float(a), float(b)) for a, b in data['pieces'])
        return cls(data['kind'], pieces, tuple(int(n) for n in data['subdivisions']))

    @cached_property
    def space_id(self):
        """Short content hash that ties cell sets to this space."""
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    # -- cells -----------------------------------------------------------

    @cached_property
    def piece_of_cell(self):
        if self.is_torus:
            return np.zeros(self.n_cells, dtype=np.int64)
        return np.repeat(np.arange(len(self.pieces)), self.subdivisions)

    @cached_property
    def cell_centers(self):
        """Cell centers: shape (n,) on interval kinds, (n, 2) on the torus."""
        if self.is_torus:
            width, height = self.subdivisions
            xs = (np.arange(width) + 0.5) / width
            ys = (np.arange(height) + 0.5) / height
            grid_x, grid_y = np.meshgrid(xs, ys)
            return np.column_stack([grid_x.ravel(), grid_y.ravel()])
        centers = [
            a + (np.arange(n) + 0.5) * (b - a) / n
            for (a, b), n in zip(self.pieces, self.subdivisions)
        ]
        return np.concatenate(centers)

    @cached_property
    def cell_radii(self):
        """Half the diameter of every cell in the space metric."""
        if self.is_torus:
            return np.full(self.n_cells, self.cell_widths.max() / 2.0)
        return np.repeat(self.cell_widths / 2.0, self.subdivisions)

    def cell_box(self, cell):
        """Closed box (lo, hi) of a cell; arrays of length 2 on the torus."""
        if self.is_torus:
            width, height = self.subdivisions
            j, i = divmod(int(cell), width)
            lo = np.array([i / width, j / height])
            return lo, lo + self.cell_widths
        piece = int(self.piece_of_cell[cell])
        a, _ = self.pieces[piece]
        k = int(cell) - int(self.piece_offsets[piece])
        w = self.cell_widths[piece]
        return a + k * w, a + (k + 1) * w

    def cell_of(self, point):
        if self.is_torus:
            x, y = (float(v) for v in point)
            width, height = self.subdivisions
            x -= math.floor(x)
            y -= math.floor(y)
            i = min(int(x * width), width - 1)
            j = min(int(y * height), height - 1)
            return j * width + i
        x = float(point)
        for piece, ((a, b), n) in enumerate(zip(self.pieces, self.subdivisions)):
            if a <= x <= b:
                k = min(int((x - a) / self.cell_widths[piece]), n - 1)
                return int(self.piece_offsets[piece]) + k
        raise PointOutsideSpace(point)

    # -- metric ----------------------------------------------------------

    def distance(self, p, q):
        if self.is_torus:
            delta = np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)) % 1.0
            return float(np.minimum(delta, 1.0 - delta).max())
        return abs(float(p) - float(q))

    def center_distances(self, rows, cols):
        """Center-to-center distance matrix between two id arrays."""
        a = self.cell_centers[np.asarray(rows, dtype=np.int64)]
        b = self.cell_centers[np.asarray(cols, dtype=np.int64)]
        if self.is_torus:
            delta = np.abs(a[:, None, :] - b[None, :, :]) % 1.0
            return np.minimum(delta, 1.0 - delta).max(axis=2)
        return np.abs(a[:, None] - b[None, :])

    def ball_indices(self, center, radius):
        """Sorted ids of the cells whose closed box meets the open ball."""
        if self.is_torus:
            width, height = self.subdivisions
            cx, cy = (float(v) for v in center)
            xs = _axis_indices(cx, radius, width)
            ys = _axis_indices(cy, radius, height)
            return (ys[:, None] * width + xs[None, :]).ravel()

        c = float(center)
        found = []
        for piece, ((a, _), n) in enumerate(zip(self.pieces, self.subdivisions)):
            w = self.cell_widths[piece]
            lo = max(math.floor((c - radius - a) / w), 0)
            hi = min(math.ceil((c + radius - a) / w) - 1, n - 1)
            if lo <= hi:
                found.append(np.arange(lo, hi + 1, dtype=np.int64) + self.piece_offsets[piece])
        if not found:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(found)

    # -- adjacency -------------------------------------------------------

    @cached_property
    def adjacency(self):
        """Symmetric facet-adjacency matrix of the cells."""
        if self.is_torus:
            width, height = self.subdivisions
            ids = np.arange(self.n_cells)
            i, j = ids % width, ids // width
            right = j * width + (i + 1) % width
            up = ((j + 1) % height) * width + i
            src = np.concatenate([ids, ids])
            dst = np.concatenate([right, up])
        else:
            starts = np.arange(self.n_cells - 1)
            same_piece = self.piece_of_cell[:-1] == self.piece_of_cell[1:]
            src = starts[same_piece]
            dst = src + 1
        keep = src != dst
        src, dst = src[keep], dst[keep]
        data = np.ones(2 * len(src), dtype=np.int8)
        matrix = coo_array(
            (data, (np.concatenate([src, dst]), np.concatenate([dst, src]))),
            shape=(self.n_cells, self.n_cells),
        ).tocsr()
        matrix.sum_duplicates()
        return matrix


def _axis_indices(center, radius, count):
    lo = math.floor((center - radius) * count)
    hi = math.ceil((center + radius) * count) - 1
    if hi - lo + 1 >= count:
        return np.arange(count, dtype=np.int64)
    return np.unique(np.arange(lo, hi + 1, dtype=np.int64) % count)


def interval(a, b, n):
    return CellSpace(INTERVAL, ((float(a), float(b)),), (int(n),))


def interval_union(pieces, subdivisions):
    pieces = tuple((float(a), float(b)) for a, b in pieces)
    return CellSpace(INTERVAL_UNION, pieces, tuple(int(n) for n in subdivisions))


def torus2(width, height):
    return CellSpace(TORUS2, (), (int(width), int(height)))


class CellSet:
    """An immutable set of cells of one space, stored as a bit vector."""

    __slots__ = ('bits', 'space_id')

    def __init__(self, bits, space_id):
        bits = np.asarray(bits, dtype=bool)
        bits.flags.writeable = False
        self.bits = bits
        self.space_id = space_id

    @classmethod
    def empty(cls, space):
        return cls(np.zeros(space.n_cells, dtype=bool), space.space_id)

    @classmethod
    def full(cls, space):
        return cls(np.ones(space.n_cells, dtype=bool), space.space_id)

    @classmethod
    def from_ids(cls, space, ids):
        bits = np.zeros(space.n_cells, dtype=bool)
        ids = ids if isinstance(ids, np.ndarray) else np.fromiter(ids, dtype=np.int64)
        bits[ids.astype(np.int64)] = True
        return cls(bits, space.space_id)

    def _check(self, other):
        if self.space_id != other.space_id:
            raise SpaceMismatch(
                f'Cell sets belong to different spaces ({self.space_id} vs {other.space_id})'
            )

    def __or__(self, other):
        self._check(other)
        return CellSet(self.bits | other.bits, self.space_id)

    def __and__(self, other):
        self._check(other)
        return CellSet(self.bits & other.bits, self.space_id)

    def __sub__(self, other):
        self._check(other)
        return CellSet(self.bits & ~other.bits, self.space_id)

    def complement(self):
        return CellSet(~self.bits, self.space_id)

    __invert__ = complement
    union = __or__
    intersection = __and__
    difference = __sub__

    def issubset(self, other):
        self._check(other)
        return not bool(np.any(self.bits & ~other.bits))

    __le__ = issubset

    def isdisjoint(self, other):
        self._check(other)
        return not bool(np.any(self.bits & other.bits))

    def ids(self):
        return np.flatnonzero(self.bits)

    def to_list(self):
        return [int(c) for c in self.ids()]

    def min(self):
        return int(self.ids()[0])

    def __len__(self):
        return int(np.count_nonzero(self.bits))

    def __bool__(self):
        return bool(self.bits.any())

    def __iter__(self):
        return iter(self.to_list())

    def __contains__(self, cell):
        return 0 <= cell < len(self.bits) and bool(self.bits[cell])

    def __eq__(self, other):
        if not isinstance(other, CellSet):
            return NotImplemented
        return self.space_id == other.space_id and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((self.space_id, self.bits.tobytes()))

    def __repr__(self):
        ids = self.to_list()
        shown = ids if len(ids) <= 12 else ids[:12] + ['...']
        return f'CellSet({shown}, n={len(ids)})'


def ball_cells(space, center, radius):
    """Cells whose closed box meets the open ball B(center, radius)."""
    if radius <= 0:
        raise ValueError('The ball radius must be positive.')
    if not space.is_torus:
        space.cell_of(center)
    return CellSet.from_ids(space, space.ball_indices(center, radius))


def cell_of(space, point):
    return space.cell_of(point)


def spatial_components(space, cells):
    """Split a cell set into its facet-connected components.

    Components come back sorted by their smallest cell id.
    """
    ids = cells.ids()
    if len(ids) == 0:
        return []
    sub = space.adjacency[ids, :][:, ids]
    _, labels = connected_components(sub, directed=False)
    components = []
    for label in np.unique(labels):
        members = ids[labels == label]
        components.append(CellSet.from_ids(space, members))
    components.sort(key=lambda component: component.min())
    return components
