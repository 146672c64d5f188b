"""Variational objective: reparameterized sampling, KL to N(0, I) and reconstruction."""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..autodiff import Graph, Node, ops
from ..errors import ShapeError
from ..models.vae_model import VaeModel
from ..utils.rng import box_muller

logger = logging.getLogger(__name__)

LOGVAR_MIN = -20.0
LOGVAR_MAX = 20.0


@dataclass
class LatentSample:
    """One reparameterized draw z = mu + exp(logvar / 2)·eps.

    Attributes:
        mu: Posterior mean
        logvar: Posterior log-variance
        z: Sampled latent
        eps: Unit-normal draw (a constant of the graph)
    """

    mu: Node
    logvar: Node
    z: Node
    eps: np.ndarray


@dataclass
class ElboTerms:
    """Per-example (batch-mean) loss terms; total = kl + recon.

    Attributes:
        kl: KL(q(z|x) || N(0, I)) in nats
        recon: Reconstruction negative log-likelihood (constants dropped)
        total: kl + recon
        sample: The latent draw the terms were computed with
    """

    kl: Node
    recon: Node
    total: Node
    sample: Optional[LatentSample] = None

    def floats(self) -> tuple:
        return float(self.total.value), float(self.kl.value), float(self.recon.value)


def _batch_sum(node: Node) -> Node:
    """Sum over everything but axis 0, then mean over axis 0; rank ≤ 1 is one example."""
    if node.ndim <= 1:
        return ops.reduce_sum(node)
    per_example = ops.reduce_sum(node, axes=tuple(range(1, node.ndim)))
    return ops.reduce_mean(per_example)


def reparameterize(
    mu: Node,
    logvar: Node,
    rng: Optional[np.random.Generator] = None,
    eps: Optional[np.ndarray] = None,
) -> LatentSample:
    """z = mu + exp(logvar/2)·eps with eps drawn by Box-Muller from rng, or given.

    Raises:
        ShapeError: If mu, logvar (and eps) shapes differ
    """
    if mu.shape != logvar.shape:
        raise ShapeError(f"reparameterize: mu {mu.shape} vs logvar {logvar.shape}")
    if eps is None:
        if rng is None:
            raise ValueError("reparameterize: pass either rng or eps")
        eps = box_muller(rng, mu.shape, dtype=mu.dtype)
    elif eps.shape != mu.shape:
        raise ShapeError(f"reparameterize: eps {eps.shape} vs mu {mu.shape}")
    graph = mu.graph
    std = ops.exp(ops.mul(logvar, 0.5))
    z = ops.add(mu, ops.mul(std, graph.constant(eps, dtype=mu.dtype)))
    return LatentSample(mu, logvar, z, eps)


def kl_standard_normal(mu: Node, logvar: Node) -> Node:
    """½ Σ (mu² + e^logvar − 1 − logvar), averaged over the batch axis."""
    if mu.shape != logvar.shape:
        raise ShapeError(f"kl_standard_normal: mu {mu.shape} vs logvar {logvar.shape}")
    terms = ops.sub(ops.add(ops.square(mu), ops.exp(logvar)), ops.add(logvar, 1.0))
    return ops.mul(_batch_sum(terms), 0.5)


def recon_loss(x_hat: Node, x: Node, kind: str = "gaussian") -> Node:
    """Unit-variance Gaussian: ½‖x − x̂‖² per image, averaged over the batch.

    With kind="bernoulli", x_hat holds decoder logits and the loss is
    bernoulli_recon_loss.
    """
    if kind == "bernoulli":
        return bernoulli_recon_loss(x_hat, x)
    if kind != "gaussian":
        raise ValueError(f"unknown reconstruction likelihood {kind!r}")
    if x_hat.shape != x.shape:
        raise ShapeError(f"recon_loss: x_hat {x_hat.shape} vs x {x.shape}")
    return ops.mul(_batch_sum(ops.square(ops.sub(x_hat, x))), 0.5)


def bernoulli_recon_loss(logits: Node, x: Node) -> Node:
    """Binary cross-entropy from decoder logits, softplus(l) − x·l summed per image."""
    if logits.shape != x.shape:
        raise ShapeError(f"bernoulli_recon_loss: logits {logits.shape} vs x {x.shape}")
    return _batch_sum(ops.sub(ops.softplus(logits), ops.mul(x, logits)))


def elbo_loss(
    model: VaeModel,
    x: Node,
    rng: Optional[np.random.Generator] = None,
    eps: Optional[np.ndarray] = None,
    recon: str = "gaussian",
) -> ElboTerms:
    """Single-sample estimate of KL(q(z|x) || p(z)) − E_q[log p(x|z)].

    Args:
        model: VAE whose encoder and decoder are bound into x's graph
        x: Image batch node, values in [0, 1]
        rng: Noise stream for eps
        eps: Fixed noise, overrides rng (frozen-noise gradient checks)
        recon: "gaussian" or "bernoulli"
    """
    mu, logvar = model.encode(x)
    logvar = ops.clamp(logvar, LOGVAR_MIN, LOGVAR_MAX)
    sample = reparameterize(mu, logvar, rng=rng, eps=eps)
    kl = kl_standard_normal(mu, logvar)
    out = model.decoder.logits(sample.z) if recon == "bernoulli" else model.decode(sample.z)
    rec = recon_loss(out, x, kind=recon)
    return ElboTerms(kl=kl, recon=rec, total=ops.add(kl, rec), sample=sample)


def sample_prior(model: VaeModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Decode n draws of z ~ N(0, I); returns n×C×H×W images in (0, 1)."""
    shape = (n, model.latent.channels, model.latent.spatial, model.latent.spatial)
    graph = Graph(recording=False)
    z = graph.constant(box_muller(rng, shape, dtype=model.dtype))
    return model.decode(z).value
