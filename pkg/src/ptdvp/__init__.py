"""Serial and parallel two-site TDVP for matrix product states with long-range interactions."""

from .dmrg import DmrgResult, dmrg_ground_state
from .fitting import ExpSumFit, fit_exponentials
from .linalg import (EigResult, ExpmResult, KrylovConfig, SvdResult, TruncationPolicy,
                     krylov_expm_apply, lanczos_ground_state, truncated_svd)
from .mpo import Model, ModelSpec, Mpo, build_mpo, expectation, mpo_to_dense
from .mps import (BondWeights, InvCanonicalMps, ProductStateSpec, basis_state, from_dense,
                  from_product_state, infidelity, orthonormalize, overlap, random_mps,
                  to_dense)
from .tdvp import EnvCache, StepResult, init_right_environments, serial_timestep

__all__ = [
    "BondWeights", "DmrgResult", "EigResult", "EnvCache", "ExpSumFit", "ExpmResult",
    "InvCanonicalMps", "KrylovConfig", "Model", "ModelSpec", "Mpo", "ProductStateSpec",
    "StepResult", "SvdResult", "TruncationPolicy", "basis_state", "build_mpo",
    "dmrg_ground_state", "expectation", "fit_exponentials", "from_dense",
    "from_product_state", "infidelity", "init_right_environments", "krylov_expm_apply",
    "lanczos_ground_state", "mpo_to_dense", "orthonormalize", "overlap", "random_mps",
    "serial_timestep", "to_dense", "truncated_svd",
]
