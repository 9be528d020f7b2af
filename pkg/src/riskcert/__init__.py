"""Excess-risk certificates and desk-scale validation for budgeted CNN classifiers."""

from .certifier import (BoundReport, ManifoldSpec, SizingRequest, assemble_bound,
                        assemble_bound_manifold, certify, consistency_check, floor_strict,
                        manifold_dim, rate_exponent, risk_decomposition_bound, size_architecture,
                        svm_bound)
from .complexity import (ComplexityInputs, cover_bound_ball, cover_bound_cnn, cover_bound_conv,
                         cover_bound_dense, empirical_packing, empirical_rademacher,
                         estimation_bound, rademacher_bound)
from .erm import (TrainConfig, empirical_phi_risk, misclassification_rate, sign_surrogate_layer,
                  train_erm)
from .loss_calc import (PsiTransform, SurrogateLoss, conditional_risk, delta_phi, is_calibrated,
                        lipschitz_constant, phi, pointwise_minimizer, psi_inverse, psi_transform,
                        truncated_modulus)
from .net_core import (FilterBank, Layer, LayerSpec, Network, forward, induce_weight_matrix,
                       max_pool, output_bound, param_count, project_budget)
from .synthdata import (Dataset, EtaFunction, bayes_phi_risk, bayes_risk, make_holder_eta,
                        make_manifold_task, make_tsybakov_eta, random_projection, sample_dataset)

__version__ = "0.1.0"
