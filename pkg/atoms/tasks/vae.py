"""
Transformer VAE for 28×28 digits.

Images are cut into 16 patches of 7×7 pixels outside the graph. The encoder
runs pre-LN blocks and mean-pools tokens into (mu, logvar); the decoder
broadcasts a projected latent over a learned positional table, runs its
own blocks and maps each token back to 49 sigmoid pixels. Sparse adapters
attach to the decoder attention layers.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from typing import NamedTuple

import numpy as np

from atoms.attention import AttentionLayer, SparseAdapter, adapter_forward, attention_forward
from atoms.errors import DimensionError
from atoms.rng import SplitMix64
from atoms.schemas import AdapterConfig
from atoms.tensor import (
    Module,
    Tensor,
    exp,
    gaussian_sample,
    layer_norm,
    matmul,
    reduce_mean,
    reduce_sum,
    relu,
    sigmoid,
    transpose,
)

PATCH = 7
GRID = 28 // PATCH
TOKENS = GRID * GRID
PIXELS = PATCH * PATCH


def patchify(images: np.ndarray) -> np.ndarray:
    if images.ndim != 3 or images.shape[1:] != (28, 28):
        raise DimensionError(f"expected B×28×28 images, got {images.shape}")
    batch = images.shape[0]
    tiles = images.reshape(batch, GRID, PATCH, GRID, PATCH).transpose(0, 1, 3, 2, 4)
    return np.ascontiguousarray(tiles.reshape(batch, TOKENS, PIXELS), dtype=np.float32)


def unpatchify(tokens: Tensor) -> Tensor:
    batch = tokens.shape[0]
    tiles = tokens.reshape(batch, GRID, GRID, PATCH, PATCH)
    return transpose(tiles, (0, 1, 3, 2, 4)).reshape(batch, 28, 28)


def _weight(rng: SplitMix64, rows: int, cols: int, std: float | None = None) -> Tensor:
    std = 1.0 / math.sqrt(rows) if std is None else std
    return Tensor(rng.normal((rows, cols), std=std), requires_grad=True)


def _bias(size: int) -> Tensor:
    return Tensor.zeros(size, requires_grad=True)


class BlockOutput(NamedTuple):
    hidden: Tensor
    codes: Tensor | None
    attention: Tensor


class TransformerBlock(Module):
    """Pre-LN attention plus a relu MLP, both residual."""

    def __init__(self, rng: SplitMix64, dim: int, heads: int, hidden: int) -> None:
        self.attention = AttentionLayer.initialize(rng.spawn("attention"), dim, dim, heads)
        self.w_in = _weight(rng.spawn("w_in"), dim, hidden)
        self.b_in = _bias(hidden)
        self.w_out = _weight(rng.spawn("w_out"), hidden, dim)
        self.b_out = _bias(dim)

    def __call__(
        self,
        hidden: Tensor,
        adapter: SparseAdapter | None = None,
        mask: np.ndarray | None = None,
    ) -> BlockOutput:
        normed = layer_norm(hidden)
        result = attention_forward(self.attention, normed)
        update = result.output
        codes = None
        if adapter is not None:
            delta, codes = adapter_forward(adapter, normed, result.mean_attention, mask)
            update = update + delta
        hidden = hidden + update
        inner = relu(matmul(layer_norm(hidden), self.w_in) + self.b_in)
        return BlockOutput(
            hidden + matmul(inner, self.w_out) + self.b_out, codes, result.mean_attention
        )


class ElboParts(NamedTuple):
    reconstruction: Tensor
    kl: Tensor


class VaeOutput(NamedTuple):
    recon: Tensor
    mu: Tensor
    logvar: Tensor
    elbo_parts: ElboParts
    coefficients: tuple[Tensor, ...] = ()


class DigitVae(Module):
    def __init__(
        self,
        seed: int,
        dim: int = 128,
        heads: int = 4,
        latent: int = 32,
        depth: int = 2,
        mlp_hidden: int | None = None,
    ) -> None:
        rng = SplitMix64(seed)
        hidden = 2 * dim if mlp_hidden is None else mlp_hidden
        self._config = {
            "seed": seed, "dim": dim, "heads": heads, "latent": latent,
            "depth": depth, "mlp_hidden": mlp_hidden,
        }
        self.embed = _weight(rng.spawn("embed"), PIXELS, dim)
        self.embed_bias = _bias(dim)
        self.encoder_positions = _weight(rng.spawn("enc_pos"), TOKENS, dim, 0.02)
        self.encoder = [
            TransformerBlock(rng.spawn("encoder", i), dim, heads, hidden) for i in range(depth)
        ]
        self.w_mu = _weight(rng.spawn("w_mu"), dim, latent)
        self.b_mu = _bias(latent)
        self.w_logvar = _weight(rng.spawn("w_logvar"), dim, latent, 0.02)
        self.b_logvar = _bias(latent)
        self.w_latent = _weight(rng.spawn("w_latent"), latent, dim)
        self.decoder_positions = _weight(rng.spawn("dec_pos"), TOKENS, dim, 0.02)
        self.decoder = [
            TransformerBlock(rng.spawn("decoder", i), dim, heads, hidden) for i in range(depth)
        ]
        self.w_pixels = _weight(rng.spawn("w_pixels"), dim, PIXELS)
        self.b_pixels = _bias(PIXELS)
        self.adapters: list[SparseAdapter] = []

    @property
    def dim(self) -> int:
        return self.embed.shape[1]

    @property
    def latent(self) -> int:
        return self.w_mu.shape[1]

    @property
    def num_adapted_layers(self) -> int:
        return len(self.adapters)

    def base_state(self) -> dict[str, np.ndarray]:
        return {
            name: value for name, value in self.state_dict().items()
            if not name.startswith("adapters.")
        }

    def copy(self) -> DigitVae:
        twin = DigitVae(**self._config)
        twin.load_state_dict(self.base_state())
        return twin

    def attach_adapters(self, config: AdapterConfig, seed: int) -> list[SparseAdapter]:
        """One zero-initialized sparse adapter per decoder attention layer."""
        rng = SplitMix64(seed)
        self.adapters = [
            SparseAdapter.initialize(rng.spawn("adapter", i), self.dim, self.dim, config)
            for i in range(len(self.decoder))
        ]
        return self.adapters

    def encode(self, images: np.ndarray) -> tuple[Tensor, Tensor]:
        tokens = Tensor(patchify(images))
        hidden = matmul(tokens, self.embed) + self.embed_bias + self.encoder_positions
        for block in self.encoder:
            hidden = block(hidden).hidden
        pooled = layer_norm(reduce_mean(hidden, axis=1))
        mu = matmul(pooled, self.w_mu) + self.b_mu
        logvar = matmul(pooled, self.w_logvar) + self.b_logvar
        return mu, logvar

    def _decode(
        self,
        z: Tensor,
        masks: Sequence[np.ndarray | None] | None = None,
    ) -> tuple[Tensor, tuple[Tensor, ...], tuple[Tensor, ...]]:
        seed_token = matmul(z, self.w_latent)
        hidden = seed_token.reshape(z.shape[0], 1, self.dim) + self.decoder_positions
        codes: list[Tensor] = []
        attention: list[Tensor] = []
        for i, block in enumerate(self.decoder):
            adapter = self.adapters[i] if self.adapters else None
            mask = None if masks is None else masks[i]
            out = block(hidden, adapter, mask)
            hidden = out.hidden
            if out.codes is not None:
                codes.append(out.codes)
                attention.append(out.attention)
        pixels = sigmoid(matmul(layer_norm(hidden), self.w_pixels) + self.b_pixels)
        return unpatchify(pixels), tuple(codes), tuple(attention)

    def decode(
        self,
        z: Tensor,
        masks: Sequence[np.ndarray | None] | None = None,
    ) -> tuple[Tensor, tuple[Tensor, ...]]:
        recon, codes, _ = self._decode(z, masks)
        return recon, codes

    def masked_output(self, inputs: np.ndarray, masks: Sequence[np.ndarray | None]) -> np.ndarray:
        mu, _ = self.encode(inputs)
        recon, _ = self.decode(mu, masks)
        return recon.numpy()

    def adapter_coefficients(self, inputs: np.ndarray) -> list[np.ndarray]:
        mu, _ = self.encode(inputs)
        _, codes = self.decode(mu)
        return [c.numpy() for c in codes]

    def adapter_attention(self, inputs: np.ndarray) -> list[np.ndarray]:
        """Head-averaged attention map fed to each adapter."""
        mu, _ = self.encode(inputs)
        _, _, attention = self._decode(mu)
        return [a.numpy() for a in attention]


def reconstruction_loss(recon: Tensor, target: np.ndarray | Tensor) -> Tensor:
    """Mean squared error over every pixel."""
    diff = recon - target
    return reduce_mean(diff * diff)


def gaussian_kl(mu: Tensor, logvar: Tensor) -> Tensor:
    """KL(N(mu, exp(logvar)) || N(0, I)), summed over latents, averaged over the batch."""
    terms = logvar + 1.0 - mu * mu - exp(logvar)
    return reduce_mean(reduce_sum(terms, axis=-1)) * -0.5


def vae_forward(
    vae: DigitVae,
    x: np.ndarray,
    noise_seed: int,
    target: np.ndarray | None = None,
    sample: bool = True,
    masks: Sequence[np.ndarray | None] | None = None,
) -> VaeOutput:
    """
    Encode, reparameterize and decode.

    The reconstruction term compares against target (defaults to x, pass
    the clean images for denoising). With sample=False the decoder reads mu.
    """
    mu, logvar = vae.encode(x)
    if sample:
        noise = SplitMix64(noise_seed).normal(mu.shape).astype(np.float32)
        z = gaussian_sample(mu, logvar, noise)
    else:
        z = mu
    recon, codes = vae.decode(z, masks)
    reference = x if target is None else target
    parts = ElboParts(reconstruction_loss(recon, reference), gaussian_kl(mu, logvar))
    return VaeOutput(recon, mu, logvar, parts, codes)
