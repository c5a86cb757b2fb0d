"""Critical lengths, spectra and constructive boundary control for the linear KdV equation on (0, L)."""

__version__ = "0.1.0"
