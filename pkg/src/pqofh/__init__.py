"""Hybrid post-quantum IPsec-style tunnel for an emulated Open Fronthaul link."""

__version__ = "0.1.0"
