"""Entry point script for smallvae - VAE pre-training and fine-tuning toolkit."""

import sys

from src.smallvae.app import main

if __name__ == "__main__":
    sys.exit(main())
