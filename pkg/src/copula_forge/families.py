"""Closed-form Archimedean generator families.

Implements Clayton, Frank, Joe, Gumbel and the catalogue families "12" and
"19" (HACopula-toolbox parameter convention).  These serve as ground-truth
data sources and as correctness oracles for the empirical Laplace machinery.

Derivatives:

* Clayton: rising-factorial closed form, any order.
* Frank:   ``|phi^(k)| = A_{k-1}(g) / (theta (1-g)^k)`` with ``g = c e^{-x}``
  and ``A_m`` the Eulerian polynomial -- all-positive terms, any order.
* Joe:     Stirling-number expansion of ``(h d/dh)^k (1-h)^alpha`` -- again
  all terms share one sign, any order.
* Gumbel / Nelsen12 / Nelsen19: closed forms for k <= 2; higher orders (up
  to ``MAX_MPMATH_ORDER``) via high-precision numerical differentiation.
"""

from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np
from scipy.special import betaln, gammaln

from .base import Generator, check_nonneg, check_unit_open_top
from .errors import (
    ParameterError,
    UnsupportedLatentError,
    UnsupportedOrderError,
)

FAMILIES = ("clayton", "frank", "joe", "gumbel", "nelsen12", "nelsen19")

# Admissible parameter ranges (lower bound, strict?).
_THETA_RANGE = {
    "clayton": (0.0, True),
    "frank": (0.0, True),
    "joe": (1.0, False),
    "gumbel": (1.0, False),
    "nelsen12": (1.0, False),
    "nelsen19": (0.0, True),
}

MAX_MPMATH_ORDER = 10


def _log1mexp(x):
    """log(1 - e^-x) for x >= 0, accurate at both ends."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        near = np.log(-np.expm1(-np.minimum(x, 1.0)))
        far = np.log1p(-np.exp(-np.maximum(x, 1.0)))
    return np.where(x < 1.0, near, far)


@lru_cache(maxsize=64)
def _eulerian_row(m):
    """Eulerian numbers <m, 0..m-1> as a float array (m >= 1)."""
    row = np.array([1.0])
    for n in range(2, m + 1):
        new = np.zeros(n)
        new[: n - 1] += (np.arange(n - 1) + 1.0) * row
        new[1:] += (n - np.arange(1, n)) * row
        row = new
    return row


@lru_cache(maxsize=64)
def _stirling2_row(k):
    """Stirling numbers of the second kind S(k, 1..k) (k >= 1)."""
    row = np.array([1.0])
    for n in range(2, k + 1):
        new = np.zeros(n)
        new[: n - 1] += np.arange(1, n) * row
        new[1:] += row
        row = new
    return row


@dataclass(frozen=True)
class ParametricGenerator(Generator):
    """One-parameter Archimedean generator.

    Parameters
    ----------
    family : str
        One of ``FAMILIES``.
    theta : float
        Copula parameter, inside the family's admissible range.
    """

    family: str
    theta: float

    def __post_init__(self):
        fam = self.family.lower()
        if fam not in FAMILIES:
            raise ParameterError(f"unknown family {self.family!r}")
        object.__setattr__(self, "family", fam)
        lo, strict = _THETA_RANGE[fam]
        ok = self.theta > lo if strict else self.theta >= lo
        if not (np.isfinite(self.theta) and ok):
            op = ">" if strict else ">="
            raise ParameterError(
                f"{fam} requires theta {op} {lo}, got {self.theta}"
            )

    # -- phi -----------------------------------------------------------

    def phi(self, x):
        x = check_nonneg(x)
        t = self.theta
        if self.family == "clayton":
            return (1.0 + x) ** (-1.0 / t)
        if self.family == "frank":
            c = -np.expm1(-t)
            xs = np.minimum(x, 1.0)
            near = (xs - np.log(np.expm1(xs) + np.exp(-t))) / t
            far = -np.log1p(-c * np.exp(-np.maximum(x, 1.0))) / t
            return np.where(x < 1.0, near, far)
        if self.family == "joe":
            return -np.expm1(_log1mexp(x) / t)
        if self.family == "gumbel":
            return np.exp(-(x ** (1.0 / t)))
        if self.family == "nelsen12":
            return 1.0 / (1.0 + x ** (1.0 / t))
        # nelsen19: theta / log(x + e^theta), written overflow-free
        return t / (t + np.log1p(x * np.exp(-t)))

    # -- phi inverse ----------------------------------------------------

    def phi_inv(self, u):
        u = check_unit_open_top(u)
        t = self.theta
        with np.errstate(over="ignore", divide="ignore"):
            if self.family == "clayton":
                return u ** (-t) - 1.0
            if self.family == "frank":
                return np.log(np.expm1(-t) / np.expm1(-t * u))
            if self.family == "joe":
                return -np.log1p(-np.exp(t * np.log1p(-u)))
            if self.family == "gumbel":
                return (-np.log(u)) ** t
            if self.family == "nelsen12":
                return (1.0 / u - 1.0) ** t
            return np.exp(t) * np.expm1(t * (1.0 - u) / u)

    # -- derivatives ----------------------------------------------------

    def phi_deriv(self, k, x):
        if k == 0:
            return self.phi(x)
        sign = -1.0 if k % 2 else 1.0
        return sign * np.exp(self.log_abs_deriv(k, x))

    def log_abs_deriv(self, k, x):
        """log |phi^(k)(x)|; exact all-positive-sum forms where available."""
        if k < 0 or int(k) != k:
            raise UnsupportedOrderError("derivative order must be an int >= 0")
        k = int(k)
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(check_nonneg(x))
        if scalar:
            return self._log_abs_deriv_vec(k, x)[0]
        return self._log_abs_deriv_vec(k, x)

    def _log_abs_deriv_vec(self, k, x):
        t = self.theta
        if k == 0:
            with np.errstate(divide="ignore"):
                return np.log(self.phi(x))
        if self.family == "clayton":
            a = 1.0 / t
            log_rising = gammaln(a + k) - gammaln(a)
            return log_rising + (-a - k) * np.log1p(x)
        if self.family == "frank":
            return self._frank_log_abs_deriv(k, x)
        if self.family == "joe":
            return self._joe_log_abs_deriv(k, x)
        return self._generic_log_abs_deriv(k, x)

    def _frank_log_abs_deriv(self, k, x):
        t = self.theta
        # g = (1 - e^-t) e^-x; 1 - g written to keep precision near x = 0
        log_g = np.log(-np.expm1(-t)) - x
        small = x < 1.0
        log_1mg = np.where(
            small,
            -x + np.log(np.expm1(np.minimum(x, 1.0)) + np.exp(-t)),
            np.log1p(-np.exp(np.minimum(log_g, -1e-300))),
        )
        if k == 1:
            log_poly = log_g
        else:
            coeffs = _eulerian_row(k - 1)
            powers = np.multiply.outer((np.arange(k - 1) + 1.0), log_g)
            mx = powers.max(axis=0)
            log_poly = mx + np.log(
                np.tensordot(coeffs, np.exp(powers - mx), axes=(0, 0))
            )
        return log_poly - k * log_1mg - np.log(t)

    def _joe_log_abs_deriv(self, k, x):
        a = 1.0 / self.theta
        log_h = -x
        log_1mh = _log1mexp(x)
        s2 = _stirling2_row(k)
        j = np.arange(1, k + 1)
        # |c_j| = a * prod_{i=1..j-1} (i - a)
        log_cj = np.log(a) + np.concatenate(
            ([0.0], np.cumsum(np.log(j[:-1] - a)))
        )
        terms = (
            np.log(s2)[:, None]
            + log_cj[:, None]
            + np.multiply.outer(j, log_h)
            + np.multiply.outer(a - j, log_1mh)
        )
        mx = terms.max(axis=0)
        return mx + np.log(np.exp(terms - mx).sum(axis=0))

    def _generic_log_abs_deriv(self, k, x):
        t = self.theta
        a = 1.0 / t
        with np.errstate(divide="ignore"):
            if k == 1:
                if self.family == "gumbel":
                    return np.log(a) + (a - 1.0) * np.log(x) - x**a
                if self.family == "nelsen12":
                    s = x**a
                    return np.log(a) + (a - 1.0) * np.log(x) - 2.0 * np.log1p(s)
                # nelsen19: |phi'| = t / ((x + e^t) L^2), L = log(x + e^t)
                big_l = t + np.log1p(x * np.exp(-t))
                return np.log(t) - big_l - 2.0 * np.log(big_l)
            if k == 2:
                if self.family == "gumbel":
                    xa = x**a
                    inner = a * xa + (1.0 - a)
                    return (
                        np.log(a) + (a - 2.0) * np.log(x) - xa + np.log(inner)
                    )
                if self.family == "nelsen12":
                    s = x**a
                    inner = 2.0 * a * s + (1.0 - a) * (1.0 + s)
                    return (
                        np.log(a)
                        + (a - 2.0) * np.log(x)
                        - 3.0 * np.log1p(s)
                        + np.log(inner)
                    )
                # nelsen19: |phi''| = t (L + 2) / ((x + e^t)^2 L^3)
                big_l = t + np.log1p(x * np.exp(-t))
                return (
                    np.log(t)
                    + np.log(big_l + 2.0)
                    - 2.0 * big_l
                    - 3.0 * np.log(big_l)
                )
        if k > MAX_MPMATH_ORDER:
            raise UnsupportedOrderError(
                f"{self.family} supports derivative orders up to "
                f"{MAX_MPMATH_ORDER}, got {k}"
            )
        return self._mpmath_log_abs_deriv(k, x)

    def _mpmath_log_abs_deriv(self, k, x):
        t = mpmath.mpf(self.theta)
        if self.family == "gumbel":
            f = lambda z: mpmath.exp(-(z ** (1 / t)))
        elif self.family == "nelsen12":
            f = lambda z: 1 / (1 + z ** (1 / t))
        else:
            f = lambda z: t / mpmath.log(z + mpmath.exp(t))
        scalar = np.ndim(x) == 0
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(xs)
        with mpmath.workdps(60):
            for i, xi in enumerate(xs):
                d = mpmath.diff(f, mpmath.mpf(float(xi)), k)
                out[i] = float(mpmath.log(abs(d))) if d != 0 else -np.inf
        return float(out[0]) if scalar else out

    # -- latent sampling -------------------------------------------------

    def sample_latent(self, rng, size=None):
        """Draw latent M with Laplace transform phi.

        Clayton -> Gamma(1/theta, 1); Frank -> Logarithmic(1 - e^-theta);
        Joe -> Sibuya(1/theta); Gumbel -> positive stable, index 1/theta.
        """
        t = self.theta
        if self.family == "clayton":
            return rng.gamma(1.0 / t, 1.0, size)
        if self.family == "frank":
            return _sample_logarithmic(-np.expm1(-t), rng, size)
        if self.family == "joe":
            return _sample_sibuya(1.0 / t, rng, size)
        if self.family == "gumbel":
            return _sample_positive_stable(1.0 / t, rng, size)
        raise UnsupportedLatentError(
            f"{self.family} has no latent-variable sampler"
        )


def _sample_logarithmic(p, rng, size):
    """Logarithmic(p) draws via Kemp's second accelerated algorithm."""
    shape = () if size is None else (size,)
    u = rng.uniform(size=shape)
    v = rng.uniform(size=shape)
    out = np.ones(shape)
    heavy = u <= p
    q = -np.expm1(v * np.log1p(-p))
    with np.errstate(divide="ignore", invalid="ignore"):
        cand = np.floor(1.0 + np.log(u) / np.log(q))
    out = np.where(heavy & (u < q * q), cand, out)
    out = np.where(heavy & (u >= q * q) & (u <= q), 2.0, out)
    return float(out) if size is None else out


def _sample_sibuya(alpha, rng, size):
    """Sibuya(alpha) draws: survival 1/(n B(n, 1-alpha)), inverted exactly."""
    shape = () if size is None else (size,)
    u = rng.uniform(size=shape)
    u = np.atleast_1d(u)
    out = np.ones_like(u)
    big = u > alpha
    if np.any(big):
        tail = 1.0 - u[big]
        g_inv = (tail * np.exp(gammaln(1.0 - alpha))) ** (-1.0 / alpha)
        f = np.floor(g_inv)
        surv_f = np.exp(-np.log(f) - betaln(f, 1.0 - alpha))
        out[big] = np.where(tail < surv_f, f + 1.0, f)
    return float(out[0]) if size is None else out


def _sample_positive_stable(alpha, rng, size):
    """Positive stable draws with Laplace transform exp(-x^alpha) (CMS)."""
    if alpha >= 1.0:
        shape = () if size is None else (size,)
        return np.ones(shape) if size is not None else 1.0
    shape = () if size is None else (size,)
    v = rng.uniform(0.0, np.pi, size=shape)
    w = rng.exponential(1.0, size=shape)
    s = (
        np.sin(alpha * v)
        / np.sin(v) ** (1.0 / alpha)
        * (np.sin((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha)
    )
    return s
