"""Multi-car elevator log simulator and a small SeqGAN stack that imitates its logs."""

__version__ = "0.1.0"
