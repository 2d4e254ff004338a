"""Uniform generator interface shared by parametric and empirical generators.

A generator is a completely monotone function ``phi`` with ``phi(0) = 1`` and
``phi(inf) = 0``.  Archimedean copula code only talks to this interface, so a
closed-form family and an empirical Laplace transform are interchangeable.
"""

import numpy as np

from .errors import DomainError


class Generator:
    """Abstract completely monotone generator.

    Subclasses must implement ``phi``, ``phi_inv`` and ``phi_deriv``; the
    log-space helpers have generic (linear-space) fallbacks that subclasses
    may override with numerically stabler forms.
    """

    def phi(self, x):
        raise NotImplementedError

    def phi_inv(self, u):
        raise NotImplementedError

    def phi_deriv(self, k, x):
        """k-th derivative of phi at x; sign is (-1)^k."""
        raise NotImplementedError

    def log_abs_deriv(self, k, x):
        """log |phi^(k)(x)|.  Fallback goes through linear space."""
        d = np.asarray(self.phi_deriv(k, x), dtype=float)
        with np.errstate(divide="ignore"):
            return np.log(np.abs(d))

    def deriv_ratio(self, k, x):
        """phi^(k+1)(x) / phi^(k)(x); always negative."""
        return np.asarray(self.phi_deriv(k + 1, x)) / np.asarray(
            self.phi_deriv(k, x)
        )


def check_nonneg(x, name="x"):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise DomainError(f"{name} must be finite and >= 0")
    return x


def check_unit_open_top(u, name="u"):
    """Validate u in (0, 1]."""
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0) or np.any(u > 1) or not np.all(np.isfinite(u)):
        raise DomainError(f"{name} must lie in (0, 1]")
    return u
