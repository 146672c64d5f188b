"""VAE model: encoder and decoder networks plus the reparameterized forward pass."""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Tuple

import numpy as np

from ..autodiff import Graph, Node, Parameter
from ..errors import CheckpointError
from ..nn.networks import Decoder, Encoder, build_decoder, build_encoder
from ..utils.rng import stream
from .config import ArchParams, LatentConfig

logger = logging.getLogger(__name__)


@dataclass
class VaeModel:
    """Encoder (parameters φ) and decoder (parameters θ) of the VAE.

    Attributes:
        encoder: Recognition network q(z|x)
        decoder: Generative network p(x|z)
        latent: Latent shape
        arch: Architecture the networks were built with
    """

    encoder: Encoder
    decoder: Decoder
    latent: LatentConfig
    arch: ArchParams

    @property
    def dtype(self) -> np.dtype:
        return self.encoder.stem.weight.data.dtype

    def parameters(self) -> List[Parameter]:
        return self.encoder.parameters() + self.decoder.parameters()

    def groups(self) -> Dict[str, List[Parameter]]:
        return {"encoder": self.encoder.parameters(), "decoder": self.decoder.parameters()}

    def freeze(self, groups: Iterable[str] = ("encoder", "decoder")) -> None:
        """Mark parameter groups frozen; frozen parameters enter graphs as constants."""
        for group in groups:
            for p in self.groups()[group]:
                p.frozen = True

    def unfreeze(self) -> None:
        for p in self.parameters():
            p.frozen = False

    def is_frozen(self, group: str) -> bool:
        return all(p.frozen for p in self.groups()[group])

    def checksums(self) -> Dict[str, str]:
        return {p.name: p.checksum() for p in self.parameters()}

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {p.name: p.data for p in self.parameters()}

    def load_state_dict(self, arrays: Dict[str, np.ndarray]) -> None:
        """Replace parameter values; names and shapes must match exactly."""
        params = {p.name: p for p in self.parameters()}
        missing = sorted(set(params) - set(arrays))
        extra = sorted(set(arrays) - set(params))
        if missing or extra:
            raise CheckpointError("<state_dict>", f"parameter mismatch, missing={missing} unexpected={extra}")
        for name, p in params.items():
            value = arrays[name]
            if value.shape != p.data.shape or value.dtype != p.data.dtype:
                raise CheckpointError(
                    "<state_dict>", f"{name}: expected {p.data.shape}/{p.data.dtype}, got {value.shape}/{value.dtype}"
                )
            p.data = np.array(value, copy=True)
            p.zero_grad()

    def encode(self, x: Node) -> Tuple[Node, Node]:
        return self.encoder(x)

    def decode(self, z: Node) -> Node:
        return self.decoder(z)

    def reconstruct(self, x: Node) -> Node:
        """Deterministic reconstruction decode(mu)."""
        mu, _ = self.encoder(x)
        return self.decoder(mu)

    def features(self, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Flattened encoder mu for a stack of images, computed without recording."""
        chunks = []
        for start in range(0, len(images), batch_size):
            graph = Graph(recording=False)
            mu, _ = self.encoder(graph.constant(images[start : start + batch_size]))
            chunks.append(mu.value.reshape(mu.shape[0], -1))
        if not chunks:
            return np.zeros((0, self.latent.flat_size), dtype=self.dtype)
        return np.concatenate(chunks, axis=0)

    def reconstructions(self, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """decode(mu) for a stack of images, computed without recording."""
        chunks = []
        for start in range(0, len(images), batch_size):
            graph = Graph(recording=False)
            chunks.append(self.reconstruct(graph.constant(images[start : start + batch_size])).value)
        return np.concatenate(chunks, axis=0) if chunks else np.zeros_like(images)


def build_model(latent: LatentConfig, arch: ArchParams, seed: int = 0, dtype=np.float32) -> VaeModel:
    """Encoder and decoder initialized from the seed's "init" stream."""
    rng = stream(seed, "init")
    encoder = build_encoder(latent, arch, rng, dtype)
    decoder = build_decoder(latent, arch, rng, dtype)
    model = VaeModel(encoder, decoder, latent, arch)
    logger.debug(f"built VAE with {sum(p.data.size for p in model.parameters())} parameters")
    return model
