"""Constitutive evaluations for the Newtonian fluid and the incompressible
shifted Mooney-Rivlin solid restricted to mu1 = 0.

All functions operate on per-quadrature-point numpy arrays; tensor
arguments have trailing shape (..., 2, 2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FluidParams:
    eta_f: float
    rho_f: float

    def __post_init__(self):
        if self.eta_f <= 0 or self.rho_f <= 0:
            raise ValueError("fluid parameters must be positive")


@dataclass(frozen=True)
class SolidParams:
    mu_s: float
    rho_s: float
    mu1: float = 0.0

    def __post_init__(self):
        if self.mu_s <= 0 or self.rho_s <= 0:
            raise ValueError("solid parameters must be positive")
        if self.mu1 != 0.0:
            raise ValueError("only mu1 = 0 is supported")


def fluid_stress(sym_grad_v: np.ndarray, p, params: FluidParams) -> np.ndarray:
    """Cauchy stress 2 eta_f eps(v) - p I."""
    eye = np.eye(2)
    return 2.0 * params.eta_f * sym_grad_v - np.asarray(p)[..., None, None] * eye


def solid_explicit_stress(grad_u_sharp: np.ndarray, history_term: np.ndarray,
                          mu_s: float) -> np.ndarray:
    """Explicitly treated remainder of the solid Cauchy stress.

    history_term is the symmetric-gradient history tensor supplied by the
    stepper (2 sym grad of the BDF displacement combination, on the current
    configuration); grad_u_sharp is the current-configuration gradient of
    the predicted displacement.
    """
    quad = np.einsum('...ji,...jk->...ik', grad_u_sharp, grad_u_sharp)
    return mu_s * (history_term - quad)


def effective_viscosity(is_solid, gamma: float, tau: float, eta_f: float,
                        mu_s: float):
    """eta_f in the fluid, gamma*tau*mu_s in the solid."""
    if gamma <= 0 or tau <= 0:
        raise ValueError("gamma and tau must be positive")
    return np.where(is_solid, gamma * tau * mu_s, eta_f)


def jacobian_det(grad_u_ref: np.ndarray) -> np.ndarray:
    """det(I + grad_hat u) for reference displacement gradients."""
    f = grad_u_ref + np.eye(2)
    return f[..., 0, 0] * f[..., 1, 1] - f[..., 0, 1] * f[..., 1, 0]
