"""Bundled graphs: the hand-drawn examples plus build specs for fattened maps."""

import json
from pathlib import Path

from cells.codec import read_graph

CORPUS_DIR = Path(__file__).resolve().parent
SPECS_DIR = CORPUS_DIR / 'specs'


def graph_paths():
    return sorted(CORPUS_DIR.glob('*.json'))


def graph_names():
    return [path.stem for path in graph_paths()]


def load_graph(name):
    return read_graph(CORPUS_DIR / f'{name}.json')


def spec_path(name):
    return SPECS_DIR / f'{name}.json'


def load_spec(name):
    with open(spec_path(name)) as f:
        return json.load(f)
