"""Build quantum waves from classical action fields and audit them on a grid.

Propagators are assembled per classical branch from the action field and the
continuity-transported density, summed over branches, superposed into
general waves, and audited against finite-difference residual operators and
an independent Crank-Nicolson reference solver.
"""

from .model import (ComplexField, FanSpec, InitialCondition, PhysicalSetup,
                    PotentialSpec, ScenarioError, SpaceTimeGrid, SpatialAxis, WaveField,
                    TimeAxis, VectorPotentialSpec, eval_potential,
                    make_scenario, scenario_fan, SCENARIO_IDS)
from .dynamics import (BranchFields, BranchSlice, Characteristic,
                       CharacteristicFan, FanGapError, build_branch_fields,
                       integrate_characteristic, integrate_fan,
                       laplacian_action, laplacian_route_mismatch,
                       propagate_density)
from .propagator import (CalibrationError, PropagatorField, assemble_propagator,
                         calibrate_rho_o, phase_consistency_deviation,
                         resolve_rho_o, richardson_extrapolate)
from .superpose import (CoverageError, InitialWave, KernelFamily,
                        build_kernel_family, fringe_spacing,
                        sample_initial_wave, superpose)
from .verify import (MadelungPair, ResidualReport, bohm_potential, bohm_stats,
                     branch_bohm_stats, compare_waves, continuity_residual,
                     crank_nicolson_evolve, full_report, hj_residual, l2_norm,
                     madelung_decompose, schrodinger_residual)
from .clock import (ClockField, ClockSpec, grid_clock, rescaled_density_check,
                    solve_clock, solve_clock_generic)

__version__ = "0.1.0"
