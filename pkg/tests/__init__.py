"""Tests for expord."""
