"""Trainers for generative Archimedean copulas.

Three flat trainers (maximum likelihood, Cramer-von Mises distance,
adversarial) plus the two-stage hierarchical fit.  All gradients are exact:
the loss terms are differentiated with respect to the latent samples (the
derivative-ratio and softmax-weight identities of the empirical Laplace
transform keep everything in log scale), then pushed through the generator
network tape.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .ac import DENSITY_CLIP, AcModel
from .errors import ContractError, ParameterError, SolverError
from .families import ParametricGenerator
from .hac import HacModel, Subordinator
from .laplace import EmpiricalGenerator, from_net
from .mlp import GeneratorNet, Mlp, NetArchitecture
from .stats import cvm_statistic, empirical_copula

log = logging.getLogger(__name__)

_METHOD_DEFAULTS = {
    "mle": dict(lr=1e-5, momentum=0.9),
    "cvm": dict(lr=1e-3, momentum=0.9),
    "gan": dict(lr=1e-4, adam_betas=(0.5, 0.999)),
}


@dataclass
class TrainConfig:
    method: str = "mle"
    epochs: int = 10000
    batch_size: int = 200
    lr: float = 1e-5
    momentum: float = 0.9
    adam_betas: tuple = (0.9, 0.999)
    l_train: int = 100
    l_eval: int = 1000
    newton_tol: float = 1e-10
    seed: int = 0
    common_random_numbers: bool = False
    eval_every: int = 200
    gan_minimax: bool = False
    hac_child_lr: float = 1e-4
    hac_scalar_lr: float = 1e-3
    hac_clip_norm: float = 20.0
    hac_beta_init: float = 1.6

    @classmethod
    def for_method(cls, method, **overrides):
        """Config with the per-method defaults applied first."""
        if method not in _METHOD_DEFAULTS:
            raise ParameterError(f"unknown method {method!r}")
        kw = dict(_METHOD_DEFAULTS[method])
        kw.update(overrides)
        return cls(method=method, **kw)


@dataclass
class FitReport:
    method: str
    epochs_run: int = 0
    trace: list = field(default_factory=list)
    best_epoch: int = -1
    best_val: float = np.inf
    n_solver_failures: int = 0
    n_clamped: int = 0
    wall_time: float = 0.0
    warnings: list = field(default_factory=list)
    final_train_nll: float = np.nan
    final_test_nll: float = np.nan


# ---------------------------------------------------------------------------
# optimizers


class SgdMomentum:
    def __init__(self, params, lr, momentum):
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        for p, v, g in zip(params, self.velocity, grads):
            v *= self.momentum
            v += g
            p[...] = p - self.lr * v


class Adam:
    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, m, v, g in zip(params, self.m, self.v, grads):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p[...] = p - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# ---------------------------------------------------------------------------
# loss values and exact gradients with respect to the latent samples


def nll(model, data, clip=False):
    """Per-sample mean negative log likelihood."""
    return float(-np.mean(model.log_density(data, clip=clip)))


def _mle_terms(eg, u, tol=1e-10):
    """Summed NLL over rows plus its gradient with respect to eg.m.

    log c(u) = log|phi^(d)(s)| - sum_j log|phi'(y_j)| with y = phi_inv(u),
    s = sum_j y_j.  Each log-derivative contributes a direct softmax-weight
    term and an indirect term through the Newton inverse.
    """
    d = u.shape[1]
    m = eg.m
    y = eg.phi_inv(u, tol=tol)
    s = y.sum(axis=1)
    ll = eg.log_abs_deriv(d, s) - eg.log_abs_deriv(1, y).sum(axis=1)
    dy = eg.inverse_grads(u, y)  # (N, d, L)
    ds = dy.sum(axis=1)
    g = eg.softmax_weights(d, s) * (d / m - s[:, None])
    g += eg.deriv_ratio(d, s)[:, None] * ds
    g -= (eg.softmax_weights(1, y) * (1.0 / m - y[..., None])).sum(axis=1)
    g -= (eg.deriv_ratio(1, y)[..., None] * dy).sum(axis=1)
    return -ll.sum(), -g.sum(axis=0)


def mle_loss_and_grads(net, eps, u, tol=1e-10):
    """Batch NLL and parameter gradients for a fixed noise batch ``eps``."""
    batch = net.sample_at(eps)
    eg = EmpiricalGenerator(batch.m, source=batch)
    loss, dm = _mle_terms(eg, u, tol=tol)
    return loss, net.backward_samples(batch, dm), batch.tape.n_clamped


def _cvm_terms(eg, u, c_emp, tol=1e-10):
    """Summed squared CvM residuals and their gradient w.r.t. eg.m."""
    y = eg.phi_inv(u, tol=tol)
    s = y.sum(axis=1)
    resid = eg.phi(s) - c_emp
    ds = eg.inverse_grads(u, y).sum(axis=1)
    slope = -np.exp(eg.log_abs_deriv(1, s))
    dc = eg.deriv_grads(0, s) + slope[:, None] * ds
    return float((resid**2).sum()), 2.0 * (resid[:, None] * dc).sum(axis=0)


def cvm_loss_and_grads(net, eps, u, c_emp, tol=1e-10):
    batch = net.sample_at(eps)
    eg = EmpiricalGenerator(batch.m, source=batch)
    loss, dm = _cvm_terms(eg, u, c_emp, tol=tol)
    return loss, net.backward_samples(batch, dm), batch.tape.n_clamped


def disc_loss_and_grads(disc, u_real, u_fake):
    """Jensen-Shannon discriminator loss (to minimize) and its gradients."""
    tape_r = disc.forward(u_real)
    tape_f = disc.forward(u_fake)
    dr = np.maximum(tape_r.out[:, 0], 1e-12)
    df = np.minimum(tape_f.out[:, 0], 1.0 - 1e-12)
    loss = -np.mean(np.log(dr)) - np.mean(np.log1p(-df))
    g = disc.backward(tape_r, (-1.0 / (dr.size * dr))[:, None])
    g.add_(disc.backward(tape_f, (1.0 / (df.size * (1.0 - df)))[:, None]))
    return float(loss), g


def gan_gen_loss_and_grads(net, disc, eps_t, eps_rows, e, minimax=False):
    """Generator loss through the differentiable sampling path.

    Fake rows are U = phi-hat(E / M) where both the per-row M and the
    transform batch come from ``net``; gradients flow through both.
    """
    eg_batch = net.sample_at(eps_t)
    eg = EmpiricalGenerator(eg_batch.m, source=eg_batch)
    rows = net.sample_at(eps_rows)
    x = e / rows.m[:, None]
    u = eg.phi(x)
    tape = disc.forward(u)
    df = np.clip(tape.out[:, 0], 1e-12, 1.0 - 1e-12)
    n = df.size
    if minimax:
        loss = float(np.mean(np.log1p(-df)))
        d_out = -1.0 / (n * (1.0 - df))
    else:
        loss = float(-np.mean(np.log(df)))
        d_out = -1.0 / (n * df)
    du = disc.backward(tape, d_out[:, None]).d_input  # (n, d)
    d_rows = (du * np.exp(eg.log_abs_deriv(1, x)) * x).sum(axis=1) / rows.m
    d_transform = np.einsum("nd,ndl->l", du, eg.deriv_grads(0, x))
    grads = net.backward_samples(rows, d_rows)
    grads.add_(net.backward_samples(eg_batch, d_transform))
    n_clamped = eg_batch.tape.n_clamped + rows.tape.n_clamped
    return loss, grads, n_clamped


def _gen_ratio(gen, k, x):
    """phi^(k+1)/phi^(k) in log scale; valid for any generator."""
    return -np.exp(gen.log_abs_deriv(k + 1, x) - gen.log_abs_deriv(k, x))


def _child_terms(outer, sub, u, t=None):
    """Summed child-block NLL and gradients w.r.t. (mu_raw, beta_raw, m).

    The child generator is phi = phi0 o psi.  For a two-column block the
    log density needs phi', phi'' and (for the chain rule through the
    argument) phi'''; everything is expressed through the ratios
    r1 = phi0''/phi0' and r2 = phi0'''/phi0'' so no raw derivative value is
    ever formed.
    """
    if u.shape[1] != 2:
        raise ContractError(
            "analytic child gradients implemented for 2-column blocks"
        )
    eg = sub.jump_eg
    mu, beta = sub.mu, sub.beta
    if t is None:
        t = np.atleast_1d(outer.phi_inv(u))
    y = sub.psi_inv(t)
    s = y.sum(axis=1)

    def local(x):
        p = sub.psi(x)
        return p, sub.psi_deriv(1, x), sub.psi_deriv(2, x), _gen_ratio(
            outer, 1, p
        )

    p_y, p1_y, p2_y, r1_y = local(y)
    p_s, p1_s, p2_s, r1_s = local(s)
    q_y = r1_y * p1_y**2 + p2_y  # phi''/phi0'(psi), negative
    q_s = r1_s * p1_s**2 + p2_s
    p3_s = sub.psi_deriv(3, s)
    r2_s = _gen_ratio(outer, 2, p_s)
    # phi'''/phi'' for the chain rule through s
    bpb = (r1_s * r2_s * p1_s**3 + 3.0 * r1_s * p1_s * p2_s + p3_s) / q_s
    ll = (
        outer.log_abs_deriv(1, p_s)
        + np.log(-q_s)
        - (outer.log_abs_deriv(1, p_y) + np.log(p1_y)).sum(axis=1)
    )

    def assemble(pp_y, pp1_y, pp2_y, pp_s, pp1_s, pp2_s):
        # all partials carry a trailing parameter axis
        dy = -pp_y / p1_y[..., None]
        ds = dy.sum(axis=1)
        d_log_a = (
            r1_y[..., None] * pp_y
            + pp1_y / p1_y[..., None]
            + (q_y / p1_y)[..., None] * dy
        )
        dq_s = (
            (r1_s * (r2_s - r1_s) * p1_s**2)[..., None] * pp_s
            + (2.0 * r1_s * p1_s)[..., None] * pp1_s
            + pp2_s
        )
        d_log_b = (
            r1_s[..., None] * pp_s
            + dq_s / q_s[..., None]
            + bpb[..., None] * ds
        )
        return -(d_log_b - d_log_a.sum(axis=1)).sum(axis=0)

    zeros_y, zeros_s = np.zeros_like(y), np.zeros_like(s)
    d_mu = assemble(
        (mu * y)[..., None],
        np.full_like(y, mu)[..., None],
        zeros_y[..., None],
        (mu * s)[..., None],
        np.full_like(s, mu)[..., None],
        zeros_s[..., None],
    )
    d_beta = assemble(
        (sub.psi(y) - mu * y)[..., None],
        (p1_y - mu)[..., None],
        p2_y[..., None],
        (p_s - mu * s)[..., None],
        (p1_s - mu)[..., None],
        p2_s[..., None],
    )
    d_m = assemble(
        -beta * eg.deriv_grads(0, y),
        -beta * eg.deriv_grads(1, y),
        -beta * eg.deriv_grads(2, y),
        -beta * eg.deriv_grads(0, s),
        -beta * eg.deriv_grads(1, s),
        -beta * eg.deriv_grads(2, s),
    )
    return -ll.sum(), float(d_mu[0]), float(d_beta[0]), d_m


def child_mle_loss_and_grads(outer, mu_raw, beta_raw, jump_net, eps, u, t=None):
    """Child-block NLL plus gradients for the subordinator parameters."""
    batch = jump_net.sample_at(eps)
    eg = EmpiricalGenerator(batch.m, source=batch)
    sub = Subordinator(float(mu_raw), float(beta_raw), eg, jump_net)
    loss, d_mu, d_beta, d_m = _child_terms(outer, sub, u, t=t)
    grads = jump_net.backward_samples(batch, d_m)
    return loss, d_mu, d_beta, grads, batch.tape.n_clamped


# ---------------------------------------------------------------------------
# fit loops


def _clip_interior(data):
    u = np.asarray(data, dtype=float)
    if u.ndim != 2 or u.shape[1] < 2:
        raise ContractError("training data must be an N x d matrix, d >= 2")
    return np.clip(u, DENSITY_CLIP, 1.0 - DENSITY_CLIP)


def eval_model(net, dim, l_eval=1000, seed=0):
    """Freeze an evaluation-size latent batch and wrap it as a flat model."""
    eg = from_net(net, l_eval, np.random.default_rng(seed))
    return AcModel(eg, dim)


def _abort_on_failures(report, diag):
    if report.n_solver_failures > max(10, 0.01 * max(report.epochs_run, 1)):
        raise SolverError(
            "persistent Newton failures during training",
            n_failures=report.n_solver_failures,
            epochs=report.epochs_run,
            last=repr(diag),
        )


def _run_flat(u, arch, config, step_fn, val_fn):
    """Shared minibatch loop: step_fn does one update, val_fn scores nets."""
    rng = np.random.default_rng(config.seed)
    net = GeneratorNet.init(arch, seed=config.seed)
    params = net.params()
    if config.method == "gan":
        opt = Adam(params, config.lr, config.adam_betas)
    else:
        opt = SgdMomentum(params, config.lr, config.momentum)
    report = FitReport(method=config.method)
    eps_fixed = None
    if config.common_random_numbers:
        eps_fixed = rng.uniform(0.0, 1.0, (config.l_train, 1))
    best_params = [p.copy() for p in params]
    t0 = time.perf_counter()
    n = u.shape[0]
    for epoch in range(config.epochs):
        idx = rng.choice(n, min(config.batch_size, n), replace=False)
        eps = (
            eps_fixed
            if eps_fixed is not None
            else rng.uniform(0.0, 1.0, (config.l_train, 1))
        )
        report.epochs_run = epoch + 1
        try:
            loss, grads, n_clamped = step_fn(net, opt, eps, idx, rng, report)
        except SolverError as err:
            report.n_solver_failures += 1
            _abort_on_failures(report, err)
            continue
        report.n_clamped += n_clamped
        report.trace.append({"epoch": epoch, "loss": float(loss)})
        if (epoch + 1) % config.eval_every == 0 or epoch == config.epochs - 1:
            val = val_fn(net)
            report.trace[-1]["val"] = val
            if val < report.best_val:
                report.best_val = val
                report.best_epoch = epoch
                best_params = [p.copy() for p in net.params()]
    net.set_params(best_params)
    report.wall_time = time.perf_counter() - t0
    return net, report


def _val_seed(config):
    return config.seed + 90001


def fit_mle(data, arch=None, config=None):
    """Fit a flat generative AC by maximum likelihood (SGD + momentum)."""
    config = config or TrainConfig.for_method("mle")
    u = _clip_interior(data)
    arch = arch or NetArchitecture()
    eps_val = np.random.default_rng(_val_seed(config)).uniform(
        0.0, 1.0, (config.l_train, 1)
    )

    def step(net, opt, eps, idx, rng, report):
        loss, grads, n_clamped = mle_loss_and_grads(net, eps, u[idx])
        opt.step(net.params(), [*grads.weights, *grads.biases])
        return loss, grads, n_clamped

    def val(net):
        eg = EmpiricalGenerator(net.sample_at(eps_val).m)
        return nll(AcModel(eg, u.shape[1]), u, clip=True)

    net, report = _run_flat(u, arch, config, step, val)
    report.final_train_nll = val(net)
    return net, report


def fit_cvm(data, arch=None, config=None):
    """Fit a flat generative AC by the Cramer-von Mises distance."""
    config = config or TrainConfig.for_method("cvm")
    u = _clip_interior(data)
    arch = arch or NetArchitecture()
    c_emp = empirical_copula(u, u)
    eps_val = np.random.default_rng(_val_seed(config)).uniform(
        0.0, 1.0, (config.l_train, 1)
    )

    def step(net, opt, eps, idx, rng, report):
        loss, grads, n_clamped = cvm_loss_and_grads(net, eps, u[idx], c_emp[idx])
        opt.step(net.params(), [*grads.weights, *grads.biases])
        return loss, grads, n_clamped

    def val(net):
        eg = EmpiricalGenerator(net.sample_at(eps_val).m)
        resid = eg.phi(eg.phi_inv(u).sum(axis=1)) - c_emp
        return float(np.mean(resid**2))

    net, report = _run_flat(u, arch, config, step, val)
    report.final_train_nll = nll(
        AcModel(EmpiricalGenerator(net.sample_at(eps_val).m), u.shape[1]),
        u,
        clip=True,
    )
    return net, report


def gan_fake_batch(eps_t, batch_size, d, rng):
    """Noise for one fake minibatch on the Marshall-Olkin path.

    Per-row latents are resampled from the same transform atoms that
    define phi-hat, so fake margins are exactly
    phi-hat(phi-hat^-1(u)) = u.  Drawing M fresh from the net instead
    leaves an O(1/sqrt(L)) margin error that the discriminator exploits
    for heavy-tailed latents.
    """
    rows = rng.integers(0, eps_t.shape[0], batch_size)
    e = rng.exponential(1.0, (batch_size, d))
    return eps_t[rows], e


def gan_fake_samples(net, eps_t, eps_rows, e):
    """Fake copula batch U = phi-hat(E / M) for the discriminator."""
    eg = EmpiricalGenerator(net.sample_at(eps_t).m)
    rows_m = net.sample_at(eps_rows).m
    return eg.phi(e / rows_m[:, None])


def fit_gan(data, arch=None, config=None):
    """Adversarial fit: discriminator ascends, generator descends."""
    config = config or TrainConfig.for_method("gan")
    u = _clip_interior(data)
    arch = arch or NetArchitecture()
    d = u.shape[1]
    disc_arch = NetArchitecture(
        input_dim=d, hidden_widths=(20,), output="sigmoid"
    )
    disc = Mlp.init(disc_arch, seed=config.seed + 1)
    disc_opt = Adam(disc.params(), config.lr, config.adam_betas)
    c_emp = empirical_copula(u, u)
    eps_val = np.random.default_rng(_val_seed(config)).uniform(
        0.0, 1.0, (config.l_train, 1)
    )
    saturated = {"count": 0}

    def step(net, opt, eps, idx, rng, report):
        # discriminator step (generator frozen)
        eps_rows, e = gan_fake_batch(eps, config.batch_size, d, rng)
        u_fake = gan_fake_samples(net, eps, eps_rows, e)
        d_loss, d_grads = disc_loss_and_grads(disc, u[idx], u_fake)
        disc_opt.step(disc.params(), [*d_grads.weights, *d_grads.biases])
        if d_loss < 1e-6:
            saturated["count"] += 1
            if saturated["count"] == 100:
                report.warnings.append(
                    "discriminator saturated for 100 consecutive epochs"
                )
        else:
            saturated["count"] = 0
        # generator step (discriminator frozen)
        eps_t2 = (
            eps
            if config.common_random_numbers
            else rng.uniform(0.0, 1.0, (config.l_train, 1))
        )
        eps_rows2, e2 = gan_fake_batch(eps_t2, config.batch_size, d, rng)
        g_loss, g_grads, n_clamped = gan_gen_loss_and_grads(
            net, disc, eps_t2, eps_rows2, e2, minimax=config.gan_minimax
        )
        opt.step(net.params(), [*g_grads.weights, *g_grads.biases])
        return g_loss, g_grads, n_clamped

    def val(net):
        eg = EmpiricalGenerator(net.sample_at(eps_val).m)
        resid = eg.phi(eg.phi_inv(u).sum(axis=1)) - c_emp
        return float(np.mean(resid**2))

    net, report = _run_flat(u, arch, config, step, val)
    report.final_train_nll = nll(
        AcModel(EmpiricalGenerator(net.sample_at(eps_val).m), u.shape[1]),
        u,
        clip=True,
    )
    return net, disc, report


# ---------------------------------------------------------------------------
# hierarchical two-stage fit


def _collapse_blocks(u, dims):
    """Scalar summary per child: within-block empirical copula values.

    The raw values follow each child's Kendall distribution, not U(0,1),
    so they are rank-normalized before the outer fit sees them.
    """
    from .data_io import rank_normalize

    edges = np.cumsum([0, *dims])
    cols = []
    for a, b in zip(edges[:-1], edges[1:]):
        block = u[:, a:b]
        if b - a == 1:
            cols.append(block[:, 0])
        else:
            cols.append(empirical_copula(block, block))
    return rank_normalize(np.column_stack(cols))


def _fit_parametric_outer(v, family, config):
    """CvM-optimal theta for a closed-form outer family on collapsed data."""
    lo, hi = {
        "clayton": (0.05, 30.0),
        "frank": (0.05, 40.0),
        "joe": (1.0, 30.0),
        "gumbel": (1.0, 30.0),
    }.get(family, (0.05, 30.0))

    def objective(theta):
        gen = ParametricGenerator(family, float(theta))
        return cvm_statistic(AcModel(gen, v.shape[1]), v)

    res = minimize_scalar(objective, bounds=(lo, hi), method="bounded")
    return ParametricGenerator(family, float(res.x))


def fit_hac(data, structure, outer_kind="gen", config=None):
    """Two-stage hierarchical fit.

    Stage 1 fits the outer generator by CvM on the block-collapsed data
    (each child block replaced by its within-block empirical copula value).
    Stage 2 freezes the outer generator and fits each child subordinator
    (drift, intensity, jump network) by maximum likelihood on its block.
    """
    config = config or TrainConfig.for_method("mle")
    u = _clip_interior(data)
    dims = [int(d) for d in structure]
    if sum(dims) != u.shape[1]:
        raise ContractError("structure does not match data dimension")
    t0 = time.perf_counter()
    v = np.clip(_collapse_blocks(u, dims), DENSITY_CLIP, 1 - DENSITY_CLIP)
    report = FitReport(method="hac")
    outer_net = None
    if outer_kind == "gen":
        cvm_cfg = TrainConfig.for_method(
            "cvm",
            epochs=config.epochs,
            batch_size=config.batch_size,
            l_train=config.l_train,
            l_eval=config.l_eval,
            seed=config.seed,
            eval_every=config.eval_every,
            common_random_numbers=config.common_random_numbers,
        )
        outer_net, stage1 = fit_cvm(v, config=cvm_cfg)
        report.trace.append({"stage": 1, "best_val": stage1.best_val})
        report.n_solver_failures += stage1.n_solver_failures
        outer = from_net(
            outer_net, config.l_eval, np.random.default_rng(config.seed + 7)
        )
    else:
        family, _, theta = outer_kind.partition(":")
        if theta:
            outer = ParametricGenerator(family, float(theta))
        else:
            outer = _fit_parametric_outer(v, family, config)
        report.trace.append({"stage": 1, "outer": outer_kind})
    outer_state = (
        outer.m.tobytes()
        if isinstance(outer, EmpiricalGenerator)
        else repr(outer)
    )

    children = []
    n = u.shape[0]
    edges = np.cumsum([0, *dims])
    for j, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        rng = np.random.default_rng(config.seed + 101 * (j + 1))
        jump_net = GeneratorNet.init(seed=config.seed + 11 * (j + 1))
        mu_raw = np.array(0.0)
        beta_raw = np.array(config.hac_beta_init)
        if b - a == 1:
            # single-variable child: no within-block dependence to fit
            eg_j = from_net(jump_net, config.l_eval, rng)
            children.append(Subordinator(0.0, 0.0, eg_j, jump_net))
            continue
        block = u[:, a:b]
        t_block = np.atleast_1d(outer.phi_inv(block))
        params = [mu_raw, beta_raw, *jump_net.params()]
        opt = SgdMomentum(params, config.hac_child_lr, config.momentum)
        # drift/intensity scalars get their own step size
        opt_scale = np.ones(len(params))
        opt_scale[:2] = config.hac_scalar_lr / config.hac_child_lr
        eps_fixed = None
        if config.common_random_numbers:
            eps_fixed = rng.uniform(0.0, 1.0, (config.l_train, 1))
        best = (np.inf, None)
        eps_val = np.random.default_rng(_val_seed(config) + j).uniform(
            0.0, 1.0, (config.l_train, 1)
        )

        def child_val():
            batch = jump_net.sample_at(eps_val)
            sub = Subordinator(
                float(mu_raw),
                float(beta_raw),
                EmpiricalGenerator(batch.m),
                jump_net,
            )
            model = HacModel(outer, [sub, sub], [2, 2])
            return nll_of_child(model, 0, block)

        for epoch in range(config.epochs):
            idx = rng.choice(n, min(config.batch_size, n), replace=False)
            eps = (
                eps_fixed
                if eps_fixed is not None
                else rng.uniform(0.0, 1.0, (config.l_train, 1))
            )
            report.epochs_run += 1
            try:
                loss, d_mu, d_beta, grads, n_clamped = (
                    child_mle_loss_and_grads(
                        outer, mu_raw, beta_raw, jump_net, eps, block[idx],
                        t=t_block[idx],
                    )
                )
            except SolverError as err:
                report.n_solver_failures += 1
                _abort_on_failures(report, err)
                continue
            report.n_clamped += n_clamped
            g_list = [
                np.array(d_mu) * opt_scale[0],
                np.array(d_beta) * opt_scale[1],
                *grads.weights,
                *grads.biases,
            ]
            norm = np.sqrt(sum(float((g**2).sum()) for g in g_list))
            if config.hac_clip_norm and norm > config.hac_clip_norm:
                g_list = [g * (config.hac_clip_norm / norm) for g in g_list]
            opt.step(params, g_list)
            if (epoch + 1) % config.eval_every == 0:
                val = child_val()
                if val < best[0]:
                    best = (
                        val,
                        (
                            float(mu_raw),
                            float(beta_raw),
                            [p.copy() for p in jump_net.params()],
                        ),
                    )
        if best[1] is not None:
            mu_raw[...] = best[1][0]
            beta_raw[...] = best[1][1]
            jump_net.set_params(best[1][2])
        report.trace.append(
            {"stage": 2, "child": j, "best_val": best[0],
             "mu_raw": float(mu_raw), "beta_raw": float(beta_raw)}
        )
        eg_j = from_net(
            jump_net, config.l_eval, np.random.default_rng(config.seed + j)
        )
        children.append(
            Subordinator(float(mu_raw), float(beta_raw), eg_j, jump_net)
        )

    new_state = (
        outer.m.tobytes()
        if isinstance(outer, EmpiricalGenerator)
        else repr(outer)
    )
    if new_state != outer_state:
        raise ContractError("outer generator changed during stage 2")
    report.wall_time = time.perf_counter() - t0
    model = HacModel(outer, children, dims, outer_net=outer_net)
    child_nlls = [
        nll_of_child(model, j, u[:, sl])
        for j, sl in enumerate(model.child_slices())
        if sl.stop - sl.start >= 2
    ]
    if child_nlls:
        report.final_train_nll = float(np.mean(child_nlls))
    return model, report


def nll_of_child(model, j, block):
    """Per-sample mean NLL of one child block of a hierarchical model."""
    return float(-np.mean(model.child_log_density(j, block, clip=True)))
