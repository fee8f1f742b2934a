"""Cost diagnostics for importance sampling in linear-Gaussian inverse
problems and one-step particle filters."""

__version__ = "0.1.0"
