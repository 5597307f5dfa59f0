"""IM/DD discrete multi-tone link simulator."""

__version__ = "0.1.0"
