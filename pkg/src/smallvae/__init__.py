"""smallvae - dense-net VAE pre-training with frozen-encoder fine-tuning."""

__version__ = "0.1.0"
