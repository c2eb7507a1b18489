"""SBVGP - Scaled Block Vecchia Gaussian-process emulation."""

__version__ = "0.1.0"
__author__ = "SBVGP Team"
__description__ = "Scalable Gaussian-process emulation with Scaled Block Vecchia"
