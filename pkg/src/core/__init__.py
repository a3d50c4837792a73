"""icmh: incremental cross-modal hashing."""
__version__ = "0.1.0"
