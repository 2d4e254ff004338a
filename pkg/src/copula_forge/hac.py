"""Two-level hierarchical Archimedean copulas via compound Poisson subordinators.

Each child j owns a subordinator with drift ``mu = exp(mu_raw) > 0``, jump
intensity ``beta = exp(beta_raw) > 0`` and a jump-size law given by a latent
batch (empirical Laplace transform).  Its Laplace exponent is

    psi(x) = mu x + beta (1 - phi_M(x)),

and the child generator is the composition ``phi_j = phi0 o psi_j``, whose
derivatives come from Faa di Bruno with incomplete Bell polynomials.
Sampling follows the Marshall-Olkin construction: a common outer latent M,
one compound Poisson value Lambda_j(M) per child, exponentials per margin.
"""

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .ac import AcModel
from .base import Generator, check_nonneg
from .errors import ContractError, UnsupportedOrderError
from .families import ParametricGenerator
from .laplace import EmpiricalGenerator

MAX_COMPOSE_ORDER = 8


@dataclass
class Subordinator:
    """Compound Poisson subordinator, frozen for evaluation.

    ``jump_net`` is optional; when present it is the source of fresh jump
    sizes in path sampling, otherwise jumps are resampled from the frozen
    batch (which keeps sampler and transform exactly consistent).
    """

    mu_raw: float
    beta_raw: float
    jump_eg: EmpiricalGenerator
    jump_net: object = None

    @property
    def mu(self):
        return float(np.exp(self.mu_raw))

    @property
    def beta(self):
        return float(np.exp(self.beta_raw))

    def psi(self, x):
        """Laplace exponent mu x + beta (1 - phi_M(x))."""
        x = check_nonneg(x)
        return self.mu * x + self.beta * (-np.expm1(-_neg_log_phi(self.jump_eg, x)))

    def psi_deriv(self, k, x):
        """psi' = mu - beta phi_M'; psi^(k) = -beta phi_M^(k) for k >= 2."""
        if k < 1:
            raise ContractError("k must be >= 1")
        if k == 1:
            return self.mu - self.beta * self.jump_eg.phi_deriv(1, x)
        return -self.beta * self.jump_eg.phi_deriv(k, x)

    def psi_inv(self, target, tol=1e-10):
        """Invert the increasing concave psi on [0, inf)."""
        target = np.asarray(check_nonneg(target, "target"), dtype=float)
        scalar = target.ndim == 0
        t = np.atleast_1d(target)
        lo = np.zeros_like(t)
        hi = t / self.mu  # psi(x) >= mu x, so the root is below t/mu
        y = hi.copy()
        f = self.psi(y) - t
        done = np.abs(f) <= tol * np.maximum(1.0, t)
        for _ in range(100):
            if np.all(done):
                break
            lo = np.where(f < 0, np.maximum(lo, y), lo)
            hi = np.where(f > 0, np.minimum(hi, y), hi)
            slope = self.psi_deriv(1, y)
            y_new = y - f / slope
            bad = ~np.isfinite(y_new) | (y_new < lo) | (y_new > hi)
            y_new = np.where(bad, 0.5 * (lo + hi), y_new)
            y = np.where(done, y, y_new)
            f = self.psi(y) - t
            done |= np.abs(f) <= tol * np.maximum(1.0, t)
        return float(y[0]) if scalar else y

    def sample_path_at(self, t, rng, exact_below=100000):
        """Lambda(t) = mu t + sum of Poisson(beta t) jump sizes (Alg. 2).

        Rows whose Poisson count exceeds ``exact_below`` use a normal
        approximation of the jump sum (count * mean + sqrt(count) * sd * Z);
        the relative error is O(1/sqrt(count)), negligible at that size.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t <= 0):
            raise ContractError("time t must be > 0")
        counts = rng.poisson(np.minimum(self.beta * t, 2**62))
        total = np.zeros_like(t)
        big = counts > exact_below
        if np.any(big):
            if self.jump_net is not None:
                ref = self.jump_net.sample_batch(10000, rng).m
            else:
                ref = self.jump_eg.m
            mean, sd = float(ref.mean()), float(ref.std())
            z = rng.standard_normal(int(big.sum()))
            cb = counts[big].astype(float)
            total[big] = np.maximum(cb * mean + np.sqrt(cb) * sd * z, 0.0)
            counts = np.where(big, 0, counts)
        n_jumps = int(counts.sum())
        if n_jumps:
            if self.jump_net is not None:
                jumps = self.jump_net.sample_batch(n_jumps, rng).m
            else:
                jumps = rng.choice(self.jump_eg.m, size=n_jumps, replace=True)
            edges = np.concatenate(([0], np.cumsum(counts)))
            sums = np.add.reduceat(
                np.concatenate((jumps, [0.0])), edges[:-1]
            )
            sums[counts == 0] = 0.0
            total += sums
        out = self.mu * t + total
        return out if out.size > 1 else float(out[0])


def _neg_log_phi(eg, x):
    """-log phi_M(x), stable for both ends (phi near 1 and near 0)."""
    return -(eg.log_abs_deriv(0, x))


def bell_polynomials(k, g):
    """Incomplete Bell polynomials B_{k,i}(g_1..g_{k-i+1}) for i = 1..k.

    ``g`` is a list of arrays [g_1, ..., g_k] (derivatives of the inner
    function).  Returns dict (kk, i) -> array, by the standard recurrence.
    """
    table = {(0, 0): 1.0}
    for kk in range(1, k + 1):
        for i in range(1, kk + 1):
            acc = 0.0
            for j in range(1, kk - i + 2):
                prev = table.get((kk - j, i - 1))
                if prev is None:
                    continue
                acc = acc + comb(kk - 1, j - 1) * g[j - 1] * prev
            table[(kk, i)] = acc
    return table


class InnerGenerator(Generator):
    """Child generator phi_j = phi0 o psi_j."""

    def __init__(self, outer, sub, max_order=MAX_COMPOSE_ORDER):
        self.outer = outer
        self.sub = sub
        self.max_order = max_order

    def phi(self, x):
        return self.outer.phi(self.sub.psi(x))

    def phi_inv(self, u):
        return self.sub.psi_inv(self.outer.phi_inv(u))

    def phi_deriv(self, k, x):
        if k == 0:
            return self.phi(x)
        if k > self.max_order:
            raise UnsupportedOrderError(
                f"composition derivatives capped at order {self.max_order}"
            )
        x = check_nonneg(x)
        p = self.sub.psi(x)
        g = [self.sub.psi_deriv(j, x) for j in range(1, k + 1)]
        bells = bell_polynomials(k, g)
        out = 0.0
        for i in range(1, k + 1):
            out = out + self.outer.phi_deriv(i, p) * bells[(k, i)]
        return out

    def log_abs_deriv(self, k, x):
        if k == 0:
            with np.errstate(divide="ignore"):
                return np.log(self.phi(x))
        d = self.phi_deriv(k, x)
        with np.errstate(divide="ignore"):
            return np.log(np.abs(d))


@dataclass
class HacModel:
    """Outer generator plus J subordinator children with fixed dimensions."""

    outer: Generator
    children: list
    dims: list
    outer_net: object = None

    def __post_init__(self):
        if len(self.children) < 2:
            raise ContractError("need at least two children")
        if len(self.children) != len(self.dims) or any(
            d < 1 for d in self.dims
        ):
            raise ContractError("each child needs a dimension >= 1")
        self.dims = [int(d) for d in self.dims]

    @property
    def dim(self):
        return sum(self.dims)

    @property
    def n_children(self):
        return len(self.children)

    def child_slices(self):
        edges = np.cumsum([0, *self.dims])
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    def inner_generator(self, j):
        return InnerGenerator(self.outer, self.children[j])

    def _check_rows(self, u):
        u = np.asarray(u, dtype=float)
        if u.ndim == 1:
            u = u[None, :]
        if u.shape[-1] != self.dim:
            raise ContractError(f"expected {self.dim} columns")
        return u

    def cdf(self, u):
        """Outer AC applied to the child AC values (nested CDF)."""
        u = self._check_rows(u)
        v = np.empty((u.shape[0], self.n_children))
        for j, sl in enumerate(self.child_slices()):
            block = u[:, sl]
            if self.dims[j] == 1:
                v[:, j] = block[:, 0]
            else:
                gen_j = self.inner_generator(j)
                v[:, j] = AcModel(gen_j, self.dims[j]).cdf(block)
        if self.n_children == 1:
            out = v[:, 0]
        else:
            out = AcModel(self.outer, self.n_children).cdf(v)
            out = np.atleast_1d(out)
        return out if out.shape[0] > 1 else float(out[0])

    def child_log_density(self, j, u_block, clip=False):
        """AC log density of child j's block under phi_j = phi0 o psi_j."""
        if self.dims[j] < 2:
            raise ContractError("child density needs dimension >= 2")
        return AcModel(self.inner_generator(j), self.dims[j]).log_density(
            u_block, clip=clip
        )

    def sample(self, n, rng):
        """Alg. 3: common outer latent, per-child subordinator values."""
        if n < 1:
            raise ContractError("need n >= 1")
        if self.outer_net is not None:
            t = self.outer_net.sample_batch(n, rng).m
        elif isinstance(self.outer, ParametricGenerator):
            t = self.outer.sample_latent(rng, n)
        elif isinstance(self.outer, EmpiricalGenerator):
            t = rng.choice(self.outer.m, size=n, replace=True)
        else:
            raise ContractError("outer generator has no latent sampler")
        u = np.empty((n, self.dim))
        for j, sl in enumerate(self.child_slices()):
            lam = np.atleast_1d(self.children[j].sample_path_at(t, rng))
            e = rng.exponential(1.0, (n, self.dims[j]))
            x = e / lam[:, None]
            inner = self.inner_generator(j)
            u[:, sl] = np.clip(inner.phi(x), 1e-300, 1.0)
        return u
