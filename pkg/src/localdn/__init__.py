"""
localdn: local Dirichlet-to-Neumann data for parabolic convection-diffusion
operators, complex geometrical optics solutions, and gauge-class recovery.
"""

from .cgo import (CGOProbe, Phase, SpecialSolution, TimeBump, TransportSolution, build_phase,
                  choose_frame, frame_violation, solve_transport, special_solution)
from .config import ExperimentConfig, load_config
from .fields import (CoefficientPair, GaugeFunction, effective_difference, effective_potential,
                     fourier_oracle, gauge_transform, make_gauge, rotational_field, synth_pair)
from .forward import (DirichletDatum, DNDataset, DNRecord, build_dataset, dn_apply,
                      face_patch_probe, neumann_trace, solve_adjoint, solve_forward)
from .grid import ExtendedGrid, SpaceTimeGrid, build_grid
from .recovery import (Budget, FourierSampleSet, GaugeReconstruction, IdentityEvaluation,
                       SamplingPlan, Tolerances, VerdictReport, assemble_curl, evaluate_identity,
                       extract_convection_samples, extract_density_samples,
                       gauge_equivalence_verdict, invert_fourier, reconstruct_gauge, xi_lattice)

__version__ = "0.1.0"
