"""
blockfactor package.
Blockwise one-factor models for binary data: exact likelihood, sampling,
IFM/EM estimation and BIC-driven selection of the block structure.
"""

__version__ = "1.0.0"
