"""1-norm regularized data-driven predictive control: pruning, atomic norms and
the implicit piecewise affine predictor."""

from .atomgeo import (AtomSet, PrunedData, PruningReport, SpanError, atomic_norm,
                      extreme_points, l1_synthesis_cost, lemma_predicates, mirror,
                      prune_dictionary, trajectory_specific_effect, unmirror)
from .estimators import (AtomicNorm, DPCController, ExplicitPredictor, ExtremePointPruner,
                         ImplicitPredictor)
from .numsolve import (DEFAULT_TOL, LinearProgram, QuadraticProgram, SolveResult, SolverError,
                       ToleranceConfig, check_kkt, numeric_rank, solve_lp, solve_qp)
from .ocp import OcpSpec, OcpSolution, pruning_equivalence, solve
from .predictor import (PwaFunction, enumerate_pwa, evaluate_pwa, mpqp_form, pointwise,
                        verify_scaling, verify_symmetry)
from .simcore import (ExcitationSpec, LTIPlant, PolynomialPlant, ScalarQuadraticPlant,
                      collect, run_closed_loop)
from .trajdata import DataDictionary, TrajectoryBank, build_dictionary, check_gpe

__version__ = "0.1.0"
