"""Empirical Laplace transform of a frozen batch of positive latent samples.

``elt(x) = (1/L) sum_l exp(-m_l x)`` is a completely monotone generator by
construction, so it can stand in for a closed-form family anywhere.  The
k-th derivative is ``(1/L) sum_l (-m_l)^k exp(-m_l x)``; its magnitude is
kept in log space (log-sum-exp over ``k log m_l - m_l x``) so that high
orders survive the large generator arguments that show up in 20-dimensional
densities.
"""

import numpy as np
from scipy.special import logsumexp

from .base import Generator, check_nonneg, check_unit_open_top
from .errors import ContractError, SolverError

EXP_FLOOR = -700.0  # exp underflows to 0 below this; clamp to avoid warnings
NEWTON_MAX_ITER = 50
DEFAULT_NEWTON_TOL = 1e-10


def _expneg(z):
    """exp(-z) with the exponent clamped at the underflow floor."""
    return np.exp(np.maximum(-z, EXP_FLOOR))


class EmpiricalGenerator(Generator):
    """Generator phi-hat defined by L frozen positive latent samples.

    Parameters
    ----------
    m : array of positive floats
        The latent batch.  Kept immutable; gradients with respect to the
        samples are exposed through the ``*_grads`` methods.
    source : SampleBatch, optional
        Back-reference to the network tape that produced ``m``.
    """

    def __init__(self, m, source=None):
        m = np.asarray(m, dtype=float).ravel()
        if m.size < 1:
            raise ContractError("need at least one latent sample")
        if np.any(m <= 0) or not np.all(np.isfinite(m)):
            raise ContractError("latent samples must be finite and positive")
        self.m = m
        self.m.flags.writeable = False
        self.source = source
        self._log_m = np.log(m)
        self._mean_m = float(m.mean())

    @property
    def size(self):
        return self.m.size

    # -- transform and derivatives ----------------------------------------

    def phi(self, x):
        x = check_nonneg(x)
        return _expneg(np.multiply.outer(x, self.m)).mean(axis=-1)

    def phi_deriv(self, k, x):
        if k == 0:
            return self.phi(x)
        sign = -1.0 if k % 2 else 1.0
        return sign * np.exp(self.log_abs_deriv(k, x))

    def log_abs_deriv(self, k, x):
        """log |phi-hat^(k)(x)| via log-sum-exp; exact sign is (-1)^k."""
        if k < 0 or int(k) != k:
            raise ContractError("derivative order must be an int >= 0")
        x = check_nonneg(x)
        t = k * self._log_m - np.multiply.outer(x, self.m)
        return logsumexp(t, axis=-1) - np.log(self.size)

    def deriv_ratio(self, k, x):
        """phi^(k+1)/phi^(k) at x, computed stably; negative."""
        return -np.exp(self.log_abs_deriv(k + 1, x) - self.log_abs_deriv(k, x))

    def softmax_weights(self, k, x):
        """Normalized weights w_l = m_l^k e^{-m_l x} / sum; rows sum to 1.

        d log|phi^(k)|/dm_l = w_l (k / m_l - x), used by all trainers.
        """
        t = k * self._log_m - np.multiply.outer(x, self.m)
        t -= t.max(axis=-1, keepdims=True)
        e = np.exp(t)
        return e / e.sum(axis=-1, keepdims=True)

    # -- inverse -----------------------------------------------------------

    def phi_inv(self, u, tol=DEFAULT_NEWTON_TOL):
        """Invert phi-hat by Newton iterations with a bisection safeguard.

        Starts from the degenerate-latent solution -log(u)/mean(m); any
        step leaving the bracket falls back to bisection on [0, y_hi],
        with y_hi doubled until it encloses the root.
        """
        u = check_unit_open_top(u)
        scalar = np.ndim(u) == 0
        uv = np.atleast_1d(np.asarray(u, dtype=float))
        y = np.where(uv >= 1.0, 0.0, -np.log(uv) / self._mean_m)
        lo = np.zeros_like(y)
        hi = np.maximum(2.0 * y, 1.0)
        # grow hi until elt(hi) < u everywhere (elt decreasing)
        for _ in range(200):
            bad = self.phi(hi) > uv
            if not np.any(bad):
                break
            hi[bad] *= 2.0
        else:
            raise SolverError("could not bracket the inverse", u=uv)
        f = self.phi(y) - uv
        converged = np.abs(f) <= tol
        for _ in range(NEWTON_MAX_ITER):
            if np.all(converged):
                break
            lo = np.where(f > 0, np.maximum(lo, y), lo)
            hi = np.where(f < 0, np.minimum(hi, y), hi)
            slope = -np.exp(self.log_abs_deriv(1, y))
            with np.errstate(divide="ignore", invalid="ignore"):
                step = f / slope
            y_new = y - step
            outside = ~np.isfinite(y_new) | (y_new <= lo) | (y_new >= hi)
            y_new = np.where(outside, 0.5 * (lo + hi), y_new)
            y = np.where(converged, y, y_new)
            f = self.phi(y) - uv
            converged |= np.abs(f) <= tol
        if not np.all(converged):
            # pure bisection cleanup for stragglers
            for _ in range(200):
                if np.all(converged):
                    break
                mid = 0.5 * (lo + hi)
                fm = self.phi(mid) - uv
                lo = np.where(fm > 0, mid, lo)
                hi = np.where(fm < 0, mid, hi)
                y = np.where(converged, y, mid)
                f = np.where(converged, f, fm)
                converged |= np.abs(f) <= tol
        if not np.all(converged):
            bad = ~converged
            raise SolverError(
                "Newton/bisection failed to reach tolerance",
                u=uv[bad],
                residual=f[bad],
                tol=tol,
            )
        y = np.where(uv >= 1.0, 0.0, y)
        return float(y[0]) if scalar else y

    # -- gradients with respect to the latent samples ----------------------

    def inverse_grads(self, u, y):
        """d y / d m_l for y = phi_inv(u), by the implicit function theorem.

        Returns an array of shape ``(*y.shape, L)``.
        """
        y = np.asarray(y, dtype=float)
        log_slope = self.log_abs_deriv(1, y)
        if np.any(log_slope < np.log(1e-30)) or np.any(
            ~np.isfinite(log_slope)
        ):
            raise SolverError("inverse slope numerically singular", y=y)
        expo = (
            -np.multiply.outer(y, self.m)
            - log_slope[..., None]
            - np.log(self.size)
        )
        return -y[..., None] * np.exp(np.maximum(expo, EXP_FLOOR))

    def deriv_grads(self, k, x):
        """d phi^(k)(x) / d m_l, exact per sample; shape (*x.shape, L)."""
        x = np.asarray(check_nonneg(x), dtype=float)
        e = _expneg(np.multiply.outer(x, self.m))
        mk = (-self.m) ** k
        lead = 0.0 if k == 0 else -k * (-self.m) ** (k - 1)
        return (lead - x[..., None] * mk) * e / self.size


def from_net(net, n, rng):
    """Draw a fresh latent batch from a generator net and freeze it."""
    batch = net.sample_batch(n, rng)
    return EmpiricalGenerator(batch.m, source=batch)
