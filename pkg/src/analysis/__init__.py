from .assumptions import (
    AssumptionReport,
    CollectionDescriptor,
    check_admissibility,
    check_assumptions,
    check_eqHypFin,
    check_H1,
    check_H2,
    compute_Nn,
    fit_discretization_exponent,
    lower_layers_report,
    point_mass_jumps,
    sup_gap,
)
from .entropy import EntropyReport, covering_number, covering_table, dudley_integral

__all__ = [
    'AssumptionReport', 'CollectionDescriptor', 'check_admissibility', 'check_assumptions',
    'check_eqHypFin', 'check_H1', 'check_H2', 'compute_Nn', 'fit_discretization_exponent',
    'lower_layers_report', 'point_mass_jumps', 'sup_gap',
    'EntropyReport', 'covering_number', 'covering_table', 'dudley_integral',
]
