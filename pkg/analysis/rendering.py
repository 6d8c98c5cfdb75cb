"""DOT renderings of the condensation DAG and of a decomposition."""

import json

from django.template.loader import render_to_string

PALETTE = ['#fdae6b', '#a1d99b', '#bcbddc', '#fdd0a2', '#c7e9c0', '#9ecae1', '#fcbba1', '#d9d9d9']

# Longer id lists collapse to a range
LABEL_CELLS = 8


def cells_label(ids):
    ids = [int(i) for i in ids]
    if len(ids) <= LABEL_CELLS:
        return '{' + ', '.join(str(i) for i in ids) + '}'
    return f'{ids[0]}..{ids[-1]} ({len(ids)} cells)'


def condensation_dot(condensation, header):
    sccs = [
        {
            'id': k,
            'label': cells_label(condensation.member_ids(k)),
            'terminal': bool(condensation.terminal[k]),
            'nontrivial': bool(condensation.nontrivial[k]),
        }
        for k in range(condensation.n_sccs)
    ]
    edges = [
        (k, int(target))
        for k in range(condensation.n_sccs)
        for target in condensation.dag_edges(k)
    ]
    return render_to_string('analysis/condensation.dot', {
        'header': json.dumps(header, sort_keys=True),
        'sccs': sccs,
        'edges': edges,
    })


def decomposition_dot(decomposition, header):
    classes = []
    for j, report in enumerate(decomposition.classes):
        n = report.period
        classes.append({
            'index': j,
            'period': n,
            'transitive': report.transitive,
            'mixing': report.mixing,
            'components': [
                {
                    'index': k,
                    'next': report.permutation[k],
                    'label': cells_label(component.ids()),
                    'color': PALETTE[k % len(PALETTE)],
                }
                for k, component in enumerate(report.components)
            ],
        })
    return render_to_string('analysis/decomposition.dot', {
        'header': json.dumps(header, sort_keys=True),
        'classes': classes,
    })
