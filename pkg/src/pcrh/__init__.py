"""Mixed-effects and Gibbs-sampled hierarchical models for longitudinal pCRH data."""

__version__ = "0.1.0"
