"""Command-line interface for SBVGP."""
