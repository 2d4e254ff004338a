"""Dataset ingestion, pseudo-observations, synthetic ground truth, and
model persistence.

Synthetic flat data uses exact latent Marshall-Olkin draws.  Two-level
nested parametric data is drawn by conditioning on the outer frailty: given
V0, each two-column child block follows the Archimedean copula with
generator ``exp(-V0 * psi)``, ``psi = phi0_inv o phi_child``, and the second
coordinate comes from inverting the closed-form conditional CDF.
"""

import csv
import json

import numpy as np
from scipy.optimize import brentq

from .ac import AcModel
from .errors import ContractError, IngestionError, ModelFormatError
from .families import ParametricGenerator
from .hac import HacModel, Subordinator
from .laplace import EmpiricalGenerator
from .mlp import GeneratorNet, Mlp, NetArchitecture

MODEL_FORMAT = "copula-forge-model"
MODEL_VERSION = 1


def rank_normalize(raw):
    """Pseudo-observations: per-column ranks scaled by N + 1.

    Ties are broken by row index (stable sort), so the result is
    deterministic and every column is a permutation of {1/(N+1), ..,
    N/(N+1)}.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] < 2:
        raise ContractError("need an N x d matrix with N >= 2")
    bad = ~np.isfinite(raw)
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise IngestionError(f"non-finite value at row {i}, column {j}")
    n = raw.shape[0]
    order = np.argsort(raw, axis=0, kind="stable")
    ranks = np.empty_like(raw)
    rows = np.arange(1, n + 1, dtype=float)[:, None]
    np.put_along_axis(ranks, order, np.broadcast_to(rows, raw.shape), axis=0)
    return ranks / (n + 1)


# ---------------------------------------------------------------------------
# CSV


def load_csv(path):
    """Read a headered numeric CSV; reject missing or non-finite cells."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        rows = []
        for i, row in enumerate(reader):
            if len(row) != len(header):
                raise IngestionError(
                    f"{path}: row {i} has {len(row)} cells, "
                    f"expected {len(header)}"
                )
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise IngestionError(
                    f"{path}: non-numeric value in row {i}"
                ) from None
            rows.append(vals)
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=float)
    bad = ~np.isfinite(data)
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise IngestionError(
            f"{path}: non-finite value at row {i}, column {header[j]!r}"
        )
    return header, data


def save_csv(path, data, header=None):
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if header is None:
        header = [f"u{j}" for j in range(data.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(data.tolist())


# ---------------------------------------------------------------------------
# synthetic ground truth


def synth_flat(family, theta, dim, n, seed):
    """Exact Marshall-Olkin draws from a closed-form family."""
    gen = ParametricGenerator(family, theta)
    return AcModel(gen, dim).sample(n, np.random.default_rng(seed))


def synth_hac(outer, children, n, seed):
    """Nested parametric two-level draws.

    Parameters
    ----------
    outer : (family, theta)
        Outer generator; must have an exact latent sampler.
    children : list of (family, theta, dim)
        Child generators; dims of 1 or 2 supported.
    """
    fam0, th0 = outer
    gen0 = ParametricGenerator(fam0, th0)
    rng = np.random.default_rng(seed)
    v0 = gen0.sample_latent(rng, n)
    blocks = []
    for fam, th, dim in children:
        if dim == 1:
            x = rng.uniform(0.0, 1.0, (n, 1))
        elif dim == 2:
            gen_j = ParametricGenerator(fam, th)
            x = _nested_pair(gen0, gen_j, v0, rng)
        else:
            raise ContractError("child dimensions of 1 or 2 supported")
        # fold the shared frailty back in: U = phi0(-log X / V0)
        u = gen0.phi(-np.log(np.maximum(x, 1e-300)) / v0[:, None])
        blocks.append(np.clip(u, 1e-300, 1.0))
    return np.hstack(blocks)


def _nested_pair(gen0, gen_j, v0, rng):
    """Sample child pairs conditional on the outer frailty values ``v0``.

    Given V0 the block copula has generator exp(-V0 psi) with
    psi = phi0_inv o phi_j.  U1 is uniform; U2 solves the conditional CDF
    psi'(s) exp(-V0 psi(s)) = w * psi'(x1) exp(-V0 psi(x1)), s = x1 + x2.
    """

    def psi(x):
        return gen0.phi_inv(gen_j.phi(x))

    def log_psi1(x):
        # psi' = phi_j' / phi0'(psi); both negative, ratio positive
        return gen_j.log_abs_deriv(1, x) - gen0.log_abs_deriv(1, psi(x))

    n = v0.shape[0]
    u1 = rng.uniform(0.0, 1.0, n)
    w = rng.uniform(0.0, 1.0, n)
    # x1 = tilde-phi_inv(u1) with tilde-phi = exp(-v0 psi); psi_inv closed
    x1 = gen_j.phi_inv(gen0.phi(-np.log(u1) / v0))
    u2 = np.empty(n)
    for i in range(n):
        base = log_psi1(x1[i]) - v0[i] * psi(x1[i]) + np.log(w[i])

        def f(s):
            return log_psi1(s) - v0[i] * psi(s) - base

        lo = x1[i]
        hi = max(2.0 * lo, 1.0)
        while f(hi) > 0:
            hi *= 2.0
            if hi > 1e300:
                raise ContractError("conditional inversion failed to bracket")
        s = brentq(f, lo, hi, xtol=1e-12, rtol=1e-12)
        u2[i] = np.exp(-v0[i] * psi(s - x1[i]))
    return np.column_stack([u1, np.clip(u2, 1e-300, 1.0)])


# ---------------------------------------------------------------------------
# model persistence


def _net_to_dict(net):
    a = net.arch
    return {
        "arch": {
            "input_dim": a.input_dim,
            "hidden_widths": list(a.hidden_widths),
            "output_dim": a.output_dim,
            "leaky_slope": a.leaky_slope,
            "output": a.output,
            "clamp": a.clamp,
        },
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def _net_from_dict(d, cls=GeneratorNet):
    arch = NetArchitecture(
        input_dim=d["arch"]["input_dim"],
        hidden_widths=tuple(d["arch"]["hidden_widths"]),
        output_dim=d["arch"]["output_dim"],
        leaky_slope=d["arch"]["leaky_slope"],
        output=d["arch"]["output"],
        clamp=d["arch"]["clamp"],
    )
    weights = [np.asarray(w, dtype=float) for w in d["weights"]]
    biases = [np.asarray(b, dtype=float) for b in d["biases"]]
    return cls(arch, weights, biases)


def _gen_to_dict(gen, net=None):
    if isinstance(gen, ParametricGenerator):
        return {"kind": "parametric", "family": gen.family, "theta": gen.theta}
    if isinstance(gen, EmpiricalGenerator):
        out = {"kind": "empirical", "m": gen.m.tolist()}
        if net is not None:
            out["net"] = _net_to_dict(net)
        return out
    raise ModelFormatError(f"cannot serialize generator {type(gen).__name__}")


def _gen_from_dict(d):
    if d["kind"] == "parametric":
        return ParametricGenerator(d["family"], d["theta"]), None
    if d["kind"] == "empirical":
        net = _net_from_dict(d["net"]) if "net" in d else None
        return EmpiricalGenerator(np.asarray(d["m"], dtype=float)), net
    raise ModelFormatError(f"unknown generator kind {d['kind']!r}")


def save_model(path, model, l_eval=1000):
    """Write an AcModel or HacModel to a versioned JSON file."""
    doc = {"format": MODEL_FORMAT, "version": MODEL_VERSION, "l_eval": l_eval}
    if isinstance(model, AcModel):
        doc["kind"] = "ac"
        doc["dim"] = model.dim
        net = getattr(model.gen, "source_net", None)
        doc["generator"] = _gen_to_dict(model.gen, net=net)
    elif isinstance(model, HacModel):
        doc["kind"] = "hac"
        doc["dims"] = list(model.dims)
        doc["outer"] = _gen_to_dict(model.outer, net=model.outer_net)
        doc["children"] = [
            {
                "mu_raw": sub.mu_raw,
                "beta_raw": sub.beta_raw,
                "jumps": sub.jump_eg.m.tolist(),
                "jump_net": (
                    _net_to_dict(sub.jump_net)
                    if sub.jump_net is not None
                    else None
                ),
            }
            for sub in model.children
        ]
    else:
        raise ModelFormatError(f"cannot save {type(model).__name__}")
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path):
    """Read a model file back; returns (model, l_eval)."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as err:
        raise ModelFormatError(f"{path}: corrupt model file ({err})") from None
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{path}: not a model file")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(
            f"{path}: unsupported version {doc.get('version')!r}"
        )
    l_eval = int(doc.get("l_eval", 1000))
    if doc["kind"] == "ac":
        gen, net = _gen_from_dict(doc["generator"])
        model = AcModel(gen, doc["dim"])
        if net is not None:
            model.gen.source_net = net
        return model, l_eval
    if doc["kind"] == "hac":
        outer, outer_net = _gen_from_dict(doc["outer"])
        children = [
            Subordinator(
                c["mu_raw"],
                c["beta_raw"],
                EmpiricalGenerator(np.asarray(c["jumps"], dtype=float)),
                (
                    _net_from_dict(c["jump_net"])
                    if c.get("jump_net") is not None
                    else None
                ),
            )
            for c in doc["children"]
        ]
        return HacModel(outer, children, doc["dims"], outer_net=outer_net), l_eval
    raise ModelFormatError(f"{path}: unknown model kind {doc['kind']!r}")
