"""Graph file formats.

JSON: {"space": ..., "epsilon": e, "source": {...}, "rows": [[...], ...]}.

Binary: the magic b"SVMG1", a little-endian u32 header length, a JSON
header with space, epsilon and source, then u32 cell and edge counts and
the u32 CSR arrays (indptr, then indices).
"""

import json
import logging
import struct

import numpy as np

from .cellspace import CellSpace
from .errors import SchemaError
from .serializers import GraphSerializer, validated
from .svmap import TransitionGraph, explicit_graph

logger = logging.getLogger(__name__)

MAGIC = b'SVMG1'
JSON = 'json'
BINARY = 'binary'
FORMATS = [JSON, BINARY]


def graph_to_json(graph):
    return json.dumps(graph.to_dict(), sort_keys=True, separators=(',', ':')) + '\n'


def graph_from_document(data):
    attrs = validated(GraphSerializer, data, 'graph')
    space = attrs['space']['space']
    graph = explicit_graph(space, attrs['rows'])
    if attrs['epsilon'] or attrs['source']:
        graph = TransitionGraph(
            space, graph.indptr, graph.indices, attrs['epsilon'], attrs['source'] or None,
        )
    return graph


def graph_to_bytes(graph, run=None):
    header = {'space': graph.space.to_dict(), 'epsilon': graph.epsilon, 'source': graph.source}
    if run is not None:
        header['run'] = run
    header = json.dumps(header, sort_keys=True, separators=(',', ':')).encode()
    return b''.join([
        MAGIC,
        struct.pack('<I', len(header)),
        header,
        struct.pack('<II', graph.n_cells, graph.n_edges),
        graph.indptr.astype('<u4').tobytes(),
        graph.indices.astype('<u4').tobytes(),
    ])


def _row_errors(indptr, indices, n_cells):
    """Per-row problems of raw CSR arrays, keyed by row index."""
    if indptr[0] != 0 or indptr[-1] != len(indices) or np.any(np.diff(indptr) < 0):
        raise SchemaError('graph: indptr must rise from 0 to the edge count')
    errors = {}
    sizes = np.diff(indptr)
    for r in np.flatnonzero(sizes == 0).tolist():
        errors.setdefault(str(r), 'Row is empty.')
    positions = np.arange(len(indices))
    owner = np.searchsorted(indptr, positions, side='right') - 1
    for pos in np.flatnonzero(indices >= n_cells).tolist():
        errors.setdefault(
            str(int(owner[pos])),
            f'Cell id {int(indices[pos])} is out of range 0..{n_cells - 1}.',
        )
    # A step inside one row must go up
    inside = owner[1:] == owner[:-1]
    for pos in np.flatnonzero(inside & (np.diff(indices) <= 0)).tolist():
        errors.setdefault(str(int(owner[pos])), 'Cell ids must be strictly increasing.')
    return dict(sorted(errors.items(), key=lambda item: int(item[0])))


def graph_from_bytes(blob):
    if not blob.startswith(MAGIC):
        raise SchemaError('graph: missing SVMG1 magic')
    try:
        offset = len(MAGIC)
        (header_len,) = struct.unpack_from('<I', blob, offset)
        offset += 4
        header = json.loads(blob[offset:offset + header_len])
        offset += header_len
        n_cells, n_edges = struct.unpack_from('<II', blob, offset)
        offset += 8
        indptr = np.frombuffer(blob, dtype='<u4', count=n_cells + 1, offset=offset)
        offset += 4 * (n_cells + 1)
        indices = np.frombuffer(blob, dtype='<u4', count=n_edges, offset=offset)
        space = CellSpace.from_dict(header['space'])
    except (struct.error, ValueError, KeyError, TypeError) as e:
        raise SchemaError(f'graph: truncated or malformed binary file ({e})')
    if space.n_cells != n_cells:
        raise SchemaError(f'graph: header space has {space.n_cells} cells, body has {n_cells}')
    indptr, indices = indptr.astype(np.int64), indices.astype(np.int64)
    errors = _row_errors(indptr, indices, n_cells)
    if errors:
        detail = '; '.join(f'rows.{r}: {message}' for r, message in errors.items())
        raise SchemaError(f'graph: {detail}', {'rows': errors})
    return TransitionGraph(
        space, indptr, indices, header.get('epsilon', 0.0), header.get('source'),
    )


def read_graph(path):
    """Load a graph file, detecting the binary form by its magic bytes."""
    with open(path, 'rb') as f:
        blob = f.read()
    if blob.startswith(MAGIC):
        graph = graph_from_bytes(blob)
    else:
        try:
            data = json.loads(blob)
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise SchemaError(f'graph: {path} is not valid JSON ({e})')
        graph = graph_from_document(data)
    logger.debug('Read %r from %s', graph, path)
    return graph

