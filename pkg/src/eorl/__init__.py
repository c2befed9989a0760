"""Population of Q-networks trained on a shared buffer, perturbed by sparse evolutionary operators."""

__version__ = "0.1.0"
