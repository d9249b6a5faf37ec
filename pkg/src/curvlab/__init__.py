"""Exact curvature matrices and KFAC for small MLPs."""
from ._kernels import BACKEND
from .curvature import (
    GGN,
    CurvatureBlock,
    Dataset,
    EmpiricalFisher,
    MCFisher,
    curvature_block,
    curvature_full,
    empirical_fisher_block,
    ggn_block,
    ggn_full,
    ggn_vector_product,
    hessian_full_fd,
    mc_fisher_block,
    type2_fisher_block,
)
from .kfac import KfacBlock, kfac_block, kfac_materialize, kfac_residual
from .losses import Criterion, LossConfig, Reduction
from .nn import Activation, Linear, Network, forward_capture, mlp
from .tensor_core import FlattenOrder, KroneckerOperator

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "GGN",
    "Activation",
    "Criterion",
    "CurvatureBlock",
    "Dataset",
    "EmpiricalFisher",
    "FlattenOrder",
    "KfacBlock",
    "KroneckerOperator",
    "Linear",
    "LossConfig",
    "MCFisher",
    "Network",
    "Reduction",
    "curvature_block",
    "curvature_full",
    "empirical_fisher_block",
    "forward_capture",
    "ggn_block",
    "ggn_full",
    "ggn_vector_product",
    "hessian_full_fd",
    "kfac_block",
    "kfac_materialize",
    "kfac_residual",
    "mc_fisher_block",
    "mlp",
    "type2_fisher_block",
]
