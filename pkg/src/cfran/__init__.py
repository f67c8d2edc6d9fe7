"""Energy-aware resource allocation for cell-free O-RAN over TWDM-PON fronthaul."""

__version__ = "0.1.0"
