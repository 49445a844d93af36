"""Built-in benchmark instances and random model generators."""

from __future__ import annotations

import math

import numpy as np

from .markov import GeneratorMatrix
from .model import ControlKernel, KLModel, NatureKernel, StateSpace
from .ode import GeneratorModel


def symmetric_two_state() -> KLModel:
    """Two control states, degenerate nature, fair nominal coin.

    Utility rewards the first state; the second is the reference.  The
    optimal value vector is h = (zeta, 0) with average reward
    log((exp(zeta) + 1) / 2), which makes this the standard closed-form
    check for the whole continuation pipeline.
    """
    space = StateSpace(xu_labels=("x1", "x2"), xn_labels=("n",))
    q0 = NatureKernel(np.ones((2, 1)))
    r0 = ControlKernel(np.full((2, 2), 0.5))
    return KLModel(space, q0, r0, utility=np.array([1.0, 0.0]), reference_state=1)


def symmetric_closed_form(zeta):
    """(h(x1), eta) of the symmetric two-state instance."""
    return float(zeta), math.log((math.exp(zeta) + 1.0) / 2.0)


def brockett_three_state() -> GeneratorModel:
    """Three-state continuous-time benchmark with one scalar input.

    The input is restricted to u > -1.  By symmetry the optimal policy is
    phi(1) = phi(3) = -3 + sqrt(9 + 6 zeta), phi(2) = 0, with average cost
    gamma = -6 + 2 sqrt(9 + 6 zeta).
    """
    a = GeneratorMatrix(np.array([
        [-1.0, 1.0, 0.0],
        [1.0, -2.0, 1.0],
        [0.0, 1.0, -1.0],
    ]))
    b = np.array([
        [-1.0, 1.0, 0.0],
        [0.0, 0.0, 0.0],
        [0.0, 1.0, -1.0],
    ])
    return GeneratorModel(
        a=a,
        b=(b,),
        kappa=np.array([3.0, 0.0, 3.0]),
        x0=1,
        u_feasible=((-1.0, math.inf),),
    )


def brockett_closed_form(zeta):
    """(phi(1), gamma) of the three-state benchmark."""
    root = math.sqrt(9.0 + 6.0 * zeta)
    return -3.0 + root, -6.0 + 2.0 * root


def random_kl_model(rng, d_u, d_n, utility_scale=1.0, concentration=2.0) -> KLModel:
    """Random nature/nurture instance with strictly positive kernels.

    Rows are Dirichlet draws, the utility is uniform on [0, utility_scale],
    and the reference state is 0.  Positive rows make the assembled nominal
    matrix irreducible and aperiodic with mixing horizon 1.
    """
    d = d_u * d_n
    space = StateSpace(
        xu_labels=tuple(f"u{i}" for i in range(d_u)),
        xn_labels=tuple(f"n{i}" for i in range(d_n)),
    )
    q0 = NatureKernel(rng.dirichlet(np.full(d_n, concentration), size=d))
    r0 = ControlKernel(rng.dirichlet(np.full(d_u, concentration), size=d))
    utility = utility_scale * rng.uniform(0.0, 1.0, size=d)
    return KLModel(space, q0, r0, utility=utility, reference_state=0)
