"""expord - exponential ordering toolkit for almost periodic Nicholson systems."""

__version__ = "0.1.0"
