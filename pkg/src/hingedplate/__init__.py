"""Obstacle problems and worst-case optimization for partially hinged plates."""

from .params import MaterialParams, DEFAULT_PARAMS, WIDE_PARAMS
from .series import (AntisymDelta, ObstacleSpec, ScanWindow, SeriesState,
                     analytic_bound_C, antisym_solution, aux_pair,
                     boundary_kernels, empty_contact_margin, envelope_g,
                     gap_threshold_M, green_value, phi_m, tail_estimate,
                     uniform_load_profile)
from .fem import (DofField, LoadSpec, Mesh, ReinforcementMask,
                  assemble_bilinear, assemble_load, energy_value, point_eval,
                  symmetry_decompose)
from .solver import (BoxConstraints, PlateOperator, SolverSettings, VISolution,
                     kkt_report, solve_densityweighted, solve_linear,
                     solve_obstacle, solve_reinforced)
from .optimize import (ForceClass, GapProfile, ObstacleFamily,
                       ReinforcementFamily, best_obstacle, best_reinforcement,
                       classify_regime, edge_gap_series_scan, gap_profile,
                       placement_bound_report, worst_force_amplitude,
                       worst_gap_force)

__version__ = "0.1.0"
