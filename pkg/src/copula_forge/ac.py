"""Flat Archimedean copula on top of any generator.

CDF and log-density work for arbitrary dimension; sampling is
Marshall-Olkin type: draw the latent M, unit exponentials E_j, and return
``U_j = phi(E_j / M)``.
"""

import logging

import numpy as np

from .base import Generator
from .errors import BoundaryError, ContractError, DomainError
from .families import ParametricGenerator
from .laplace import EmpiricalGenerator

log = logging.getLogger(__name__)

DENSITY_CLIP = 1e-9  # training-path boundary clip for pseudo-observations


class AcModel:
    """Archimedean copula with generator ``gen`` in dimension ``dim``."""

    def __init__(self, gen, dim):
        if not isinstance(gen, Generator):
            raise ContractError("gen must implement the Generator interface")
        if dim < 2:
            raise ContractError("copula dimension must be >= 2")
        self.gen = gen
        self.dim = int(dim)

    def _check_rows(self, u):
        u = np.asarray(u, dtype=float)
        if u.ndim == 1:
            u = u[None, :]
        if u.shape[-1] != self.dim:
            raise ContractError(
                f"expected {self.dim} columns, got {u.shape[-1]}"
            )
        if np.any(u < 0) or np.any(u > 1) or not np.all(np.isfinite(u)):
            raise DomainError("copula arguments must lie in [0, 1]")
        return u

    def cdf(self, u):
        """C(u) = phi(sum_i phi_inv(u_i)); grounded and uniform-marginal."""
        u = self._check_rows(u)
        out = np.zeros(u.shape[0])
        alive = ~np.any(u == 0.0, axis=1)
        if np.any(alive):
            ua = u[alive]
            s = np.zeros(ua.shape[0])
            inner = ua < 1.0
            if np.any(inner):
                y = np.zeros_like(ua)
                y[inner] = self.gen.phi_inv(ua[inner])
                s = y.sum(axis=1)
            out[alive] = self.gen.phi(s)
        return out if out.shape[0] > 1 else float(out[0])

    def log_density(self, u, clip=False):
        """log c(u) from the generator-derivative form of the density.

        Interior points only; with ``clip=True`` (training paths) the
        arguments are first pulled inside ``[DENSITY_CLIP, 1-DENSITY_CLIP]``.
        """
        u = self._check_rows(u)
        if clip:
            u = np.clip(u, DENSITY_CLIP, 1.0 - DENSITY_CLIP)
        elif np.any(u <= 0.0) or np.any(u >= 1.0):
            raise BoundaryError("density requires interior points")
        y = self.gen.phi_inv(u)
        s = y.sum(axis=1)
        out = self.gen.log_abs_deriv(self.dim, s) - self.gen.log_abs_deriv(
            1, y
        ).sum(axis=1)
        n_under = int(np.sum(~np.isfinite(out)))
        if n_under:
            log.warning("density underflow on %d of %d points", n_under, len(out))
            out = np.where(np.isfinite(out), out, -np.inf)
        return out if out.shape[0] > 1 else float(out[0])

    def sample(self, n, rng):
        """Marshall-Olkin draws from this model's own generator.

        Parametric generators use their exact latent samplers; a frozen
        empirical generator's latent is the discrete law over its batch, so
        the draws match the CDF/density this model reports exactly.
        """
        if n < 1:
            raise ContractError("need n >= 1")
        if isinstance(self.gen, ParametricGenerator):
            m = self.gen.sample_latent(rng, n)
        elif isinstance(self.gen, EmpiricalGenerator):
            m = rng.choice(self.gen.m, size=n, replace=True)
        else:
            raise ContractError("generator has no latent sampler")
        e = rng.exponential(1.0, (n, self.dim))
        with np.errstate(over="ignore"):
            u = self.gen.phi(e / m[:, None])
        return np.clip(u, 1e-300, 1.0)


def sample_generative(net, dim, n, n_transform, rng):
    """Marshall-Olkin sampling straight from a generator network.

    Per call: one fresh latent batch of size ``n_transform`` defines the
    empirical transform (shared by all rows); each row gets its own
    ``M = G(eps)`` and exponentials.  Returns ``(u, eg, m_rows)`` so
    trainers can push gradients through both latent paths.
    """
    if n < 1:
        raise ContractError("need n >= 1")
    from .laplace import from_net

    eg = from_net(net, n_transform, rng)
    row_batch = net.sample_batch(n, rng)
    e = rng.exponential(1.0, (n, dim))
    x = e / row_batch.m[:, None]
    u = np.clip(eg.phi(x), 1e-300, 1.0)
    return u, eg, row_batch, e
