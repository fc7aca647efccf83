from .rects import (
    CSet,
    Rect,
    d_hausdorff,
    d_m,
    inclusion_exclusion_terms,
    measure_cset,
    measure_union,
    pairwise_distances,
    rect_intersect,
    rect_measure,
)
from .dyadic import (
    DyadicLevel,
    consistent_ordering,
    enumerate_An,
    g_n,
    left_neighbourhood,
    left_neighbourhoods,
    rectangular_increment,
)
from .lower_layers import LowerLayerGrid, lower_layers_enumerate, lower_layers_min_gap

__all__ = [
    'CSet', 'Rect', 'd_hausdorff', 'd_m', 'inclusion_exclusion_terms', 'measure_cset',
    'measure_union', 'pairwise_distances', 'rect_intersect', 'rect_measure',
    'DyadicLevel', 'consistent_ordering', 'enumerate_An', 'g_n', 'left_neighbourhood',
    'left_neighbourhoods', 'rectangular_increment',
    'LowerLayerGrid', 'lower_layers_enumerate', 'lower_layers_min_gap',
]
