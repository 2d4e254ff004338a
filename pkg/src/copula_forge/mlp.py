"""Small multilayer perceptrons with an explicit reverse-mode tape.

Two uses: the latent generator (scalar input, ``exp`` output, so every
sample is positive) and the adversarial discriminator (``sigmoid`` output).
The networks are tiny and fixed-shape, so gradients are hand-rolled rather
than pulled from an autodiff framework.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError

DEFAULT_LEAKY_SLOPE = 0.01
DEFAULT_CLAMP = 30.0


@dataclass(frozen=True)
class NetArchitecture:
    """Layer plan for an MLP.

    ``output`` is "exp" (positive samples, pre-activation clamped to
    ``[-clamp, clamp]``) or "sigmoid" (discriminator scores in (0,1)).
    """

    input_dim: int = 1
    hidden_widths: tuple = (10, 10)
    output_dim: int = 1
    leaky_slope: float = DEFAULT_LEAKY_SLOPE
    output: str = "exp"
    clamp: float = DEFAULT_CLAMP

    def __post_init__(self):
        if not self.hidden_widths:
            raise ContractError("hidden_widths must be non-empty")
        if self.output not in ("exp", "sigmoid"):
            raise ContractError(f"unknown output activation {self.output!r}")
        object.__setattr__(self, "hidden_widths", tuple(self.hidden_widths))


@dataclass
class Tape:
    """Cached forward pass: activations per layer plus clamp bookkeeping."""

    x: np.ndarray
    pre_acts: list
    acts: list
    out: np.ndarray
    clamp_mask: np.ndarray
    n_clamped: int


@dataclass
class Grads:
    weights: list
    biases: list
    d_input: np.ndarray

    def scaled(self, a):
        return Grads(
            [a * w for w in self.weights],
            [a * b for b in self.biases],
            a * self.d_input,
        )

    def add_(self, other):
        for w, ow in zip(self.weights, other.weights):
            w += ow
        for b, ob in zip(self.biases, other.biases):
            b += ob
        return self


class Mlp:
    """Feed-forward net; immutable shape, parameters owned by a trainer."""

    def __init__(self, arch, weights, biases):
        self.arch = arch
        self.weights = weights
        self.biases = biases
        widths = (arch.input_dim, *arch.hidden_widths, arch.output_dim)
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (widths[i + 1], widths[i]) or b.shape != (
                widths[i + 1],
            ):
                raise ContractError(f"layer {i} shape mismatch")

    @classmethod
    def init(cls, arch, seed):
        """Uniform fan-in initialization, deterministic for a fixed seed."""
        rng = np.random.default_rng(seed)
        widths = (arch.input_dim, *arch.hidden_widths, arch.output_dim)
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
            biases.append(rng.uniform(-bound, bound, fan_out))
        return cls(arch, weights, biases)

    # -- parameter plumbing ----------------------------------------------

    def params(self):
        return [*self.weights, *self.biases]

    def set_params(self, params):
        n = len(self.weights)
        self.weights = [np.array(p, dtype=float) for p in params[:n]]
        self.biases = [np.array(p, dtype=float) for p in params[n:]]

    def copy(self):
        return type(self)(
            self.arch,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    # -- forward / backward ----------------------------------------------

    def forward(self, x):
        """Run the net on rows of ``x`` ((n, input_dim)); returns a Tape."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        slope = self.arch.leaky_slope
        a = x
        pre_acts, acts = [], [a]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            z = a @ w.T + b
            pre_acts.append(z)
            a = np.where(z > 0.0, z, slope * z)
            acts.append(a)
        z = a @ self.weights[-1].T + self.biases[-1]
        pre_acts.append(z)
        if self.arch.output == "exp":
            zc = np.clip(z, -self.arch.clamp, self.arch.clamp)
            out = np.exp(zc)
            clamp_mask = np.abs(z) < self.arch.clamp
        else:
            out = _sigmoid(z)
            clamp_mask = np.ones_like(z, dtype=bool)
        n_clamped = int(np.size(clamp_mask) - np.count_nonzero(clamp_mask))
        return Tape(x, pre_acts, acts, out, clamp_mask, n_clamped)

    def backward(self, tape, d_out):
        """Accumulate dLoss/dparams and dLoss/dinput from dLoss/doutput."""
        d_out = np.asarray(d_out, dtype=float)
        if d_out.shape != tape.out.shape:
            d_out = d_out.reshape(tape.out.shape)
        if self.arch.output == "exp":
            d_z = d_out * tape.out * tape.clamp_mask
        else:
            d_z = d_out * tape.out * (1.0 - tape.out)
        slope = self.arch.leaky_slope
        d_ws = [None] * len(self.weights)
        d_bs = [None] * len(self.biases)
        for i in range(len(self.weights) - 1, -1, -1):
            d_ws[i] = d_z.T @ tape.acts[i]
            d_bs[i] = d_z.sum(axis=0)
            d_a = d_z @ self.weights[i]
            if i > 0:
                z_prev = tape.pre_acts[i - 1]
                d_z = d_a * np.where(z_prev > 0.0, 1.0, slope)
        return Grads(d_ws, d_bs, d_a)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class SampleBatch:
    """L positive latent draws with the tape retained for backprop."""

    eps: np.ndarray
    m: np.ndarray
    tape: Tape

    def __len__(self):
        return self.m.shape[0]


class GeneratorNet(Mlp):
    """Latent generator G: U(0,1) noise in, positive sample out."""

    @classmethod
    def init(cls, arch=None, seed=0):
        if arch is None:
            arch = NetArchitecture()
        if arch.output != "exp" or arch.output_dim != 1:
            raise ContractError("generator must have scalar exp output")
        return super().init(arch, seed)

    def sample_batch(self, n, rng):
        """Draw n latent samples, keeping the tape for gradients."""
        if n < 1:
            raise ContractError("need at least one sample")
        eps = rng.uniform(0.0, 1.0, (n, self.arch.input_dim))
        tape = self.forward(eps)
        return SampleBatch(eps[:, 0], tape.out[:, 0], tape)

    def sample_at(self, eps):
        """Deterministic batch from given noise (common-random-numbers)."""
        eps = np.asarray(eps, dtype=float).reshape(-1, self.arch.input_dim)
        tape = self.forward(eps)
        return SampleBatch(eps[:, 0], tape.out[:, 0], tape)

    def backward_samples(self, batch, d_loss_dm):
        """Parameter gradients of sum_l d_loss_dm[l] * M_l."""
        d_loss_dm = np.asarray(d_loss_dm, dtype=float)
        if d_loss_dm.shape != batch.m.shape:
            raise ContractError(
                f"gradient length {d_loss_dm.shape} != batch {batch.m.shape}"
            )
        return self.backward(batch.tape, d_loss_dm[:, None])
