"""Safe sample screening for convex ERM via ellipsoidal test regions."""

from .core import (Dataset, Mode, ModelVector, ProblemKind, SampleMask,
                   gen_interval_dataset, gen_synthetic_regression,
                   load_dataset, load_mask, load_model, save_dataset,
                   save_mask, save_model, subset)
from .ellipsoid import (CutRegion, Ellipsoid, build_region, dense_matrix,
                        init_ball, logvol_drop, matvec, step,
                        verify_containment)
from .erm import (ErmProblem, Penalty, SolveTrace, dual_from_primal,
                  dual_objective, duality_gap, kkt_residual, margin_vector,
                  objective_subgradient, primal_objective, prox_step,
                  soft_threshold, solve, subset_problem)
from .kernels import GramMatrix, gaussian_gram, kernelize
from .losses import (FlatInterval, LossFamily, SafeLoss, flat_interval,
                     infconv_oracle, loss_conjugate, loss_eval,
                     loss_subgradient)
from .screening import (ScreeningReport, certified_radius, compression_order,
                        compression_scores, gap_ball_region,
                        heuristic_radius, max_linear_over_region,
                        progress_radius, screen, verify_safety)

__version__ = "0.1.0"
