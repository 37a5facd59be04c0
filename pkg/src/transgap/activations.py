"""Piecewise power-smoothed ReLU.

For an exponent q in (1, 2] the unit is 0 on the negative axis, x^q on
(0, t] with t = (1/q)^(1/(q-1)), and the shifted identity x - t + c with
c = (1/q)^(q/(q-1)) beyond t.  It is continuously differentiable, its
derivative is bounded by 1, and the derivative is (q-1)-power Hoelder with
scalar constant q.  The largest deviation from plain ReLU is t - t^q,
attained at x = t (0.25 for q = 2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ActivationSpec:
    """Exponent q plus the derived knee location t and offset c."""

    q: float
    t: float = field(init=False)
    c: float = field(init=False)

    def __post_init__(self):
        if not 1.0 < self.q <= 2.0:
            raise ValueError("q must lie in (1, 2]")
        object.__setattr__(self, "t", (1.0 / self.q) ** (1.0 / (self.q - 1.0)))
        object.__setattr__(self, "c", (1.0 / self.q) ** (self.q / (self.q - 1.0)))

    @property
    def alpha_tilde(self) -> float:
        """Hoelder exponent of the derivative (q - 1)."""
        return self.q - 1.0

    def holder_vector_constant(self, dim: int) -> float:
        """Hoelder constant q * dim^((2-q)/2) for dim-dimensional inputs."""
        return self.q * float(dim) ** ((2.0 - self.q) / 2.0)

    def relu_gap(self) -> float:
        """sup |sigma(x) - relu(x)|, attained at x = t."""
        return self.t - self.t ** self.q


def act_eval(a: ActivationSpec, x: np.ndarray) -> np.ndarray:
    """Elementwise activation value."""
    x = np.asarray(x, dtype=np.float64)
    mid = np.clip(x, 0.0, a.t)
    out = mid ** a.q
    return np.where(x > a.t, x - a.t + a.c, out)


def act_deriv(a: ActivationSpec, x: np.ndarray) -> np.ndarray:
    """Elementwise activation derivative (0, q x^(q-1), or 1)."""
    x = np.asarray(x, dtype=np.float64)
    mid = np.clip(x, 0.0, a.t)
    out = a.q * mid ** (a.q - 1.0)
    return np.where(x > a.t, 1.0, out)
