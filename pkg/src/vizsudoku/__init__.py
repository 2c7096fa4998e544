"""Joint inference over classifier probabilities for image-based sudoku."""

from .calibration import (LogitField, ScalingParams, apply_scaling, fit_scaling, nll,
                          reliability_curve, softmax)
from .csp import (DomainSet, Instance, SearchStats, count_solutions, find_second_solution,
                  generate_puzzle, is_unique, propagate, solve_csp)
from .grid import (BoxSize, CostField, Grid, ProbField, check_rules, parse_grid, serialize_grid,
                   to_cost_field)
from .inference import (Nogood, SolveOutcome, restrict_top_k, solve_baseline, solve_hybrid1,
                        solve_hybrid2)
from .simulate import NoiseParams, simulate_field, simulate_vector, tune_to_accuracy

__version__ = "0.1.0"
