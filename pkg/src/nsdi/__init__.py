"""Two-electron strong-field ionization simulator: yields, momenta and rate models."""
__version__ = "0.1.0"
