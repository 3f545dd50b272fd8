"""Liouville torus actions, action-angle charts, conservation checks and formal normal forms."""

__version__ = "0.1.0"
