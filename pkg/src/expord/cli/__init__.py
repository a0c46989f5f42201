"""CLI module for expord."""
