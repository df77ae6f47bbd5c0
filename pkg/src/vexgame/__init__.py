"""Convexity-preserving backward induction for differential games with asymmetric information."""
from .grid import (BarycentricLocation, DomainError, SimplexPartition, SpatialGrid, TemporalGrid,
                   UnsupportedDimensionError, barycentric_locate, build_partitions, interpolate_space,
                   interpolate_time)
from .envelope import (EnvelopeResult, InfeasibleError, convexity_defect, envelope_lp_oracle,
                       lower_convex_envelope, vex_properties_check)
from .dynamics import (DiffusionModel, IncrementLaw, constant_diffusion, euler_step, increment_law,
                       logistic_diffusion, one_step_expectation)
from .hamiltonian import (ClosedFormHamiltonian, MinimaxHamiltonian, ModelError, constant_hamiltonian,
                          eval_hamiltonian, growth_diagnostic, isaacs_check, trig_hamiltonian,
                          zero_hamiltonian)
from .solver import (GameProblem, NumericalError, SingularityError, TerminalPayoff, ValueField,
                     backward_step, compute_Y, compute_Z, constant_payoff, estimate_moduli,
                     eval_solution, restore_field, solve, terminal_values, zero_payoff)
from .feedback import (FeedbackLaw, dpp_residual, dpp_residuals, feedback_distribution,
                       simulate_trajectory, unconditional_feedback)
from .convergence import ErrorTable, StudyPlan, eoc, run_studies

__version__ = "0.1.0"
