"""Invariant-ellipsoid analysis and LMI synthesis of input filters that keep
an attacked plant inside its safe set."""
from .ellipsoid import (Ellipsoid, SafetySets, contains_point, ellipse_points, is_contained,
                        project, project_onto, sample_boundary)
from .errors import (ConditioningError, ConfigError, DimensionError, DivergenceError,
                     ExtractionError, InfeasibleError, NumericalError, SafeFilterError,
                     SolverFailure, StabilityError)
from .lti import (FilterRealization, StateSpaceModel, Trajectory, build_extended_system,
                  frequency_response, hinf_norm, is_hurwitz, series_model, simulate)
from .synthesis import (GridSearchResult, ReachableSetAnalysis, SynthesisConfig,
                        SynthesisOutcome, analyze_reachable_set, extract_filter, grid_search,
                        hatted_from_filter, reconstruct_Q, synthesize_filter)
from .verify import (AttackPolicy, VerificationReport, check_invariance, full_verify,
                     greedy_attack_policy, monte_carlo_invariance, write_trace_csv)

__version__ = "0.1.0"
