"""Stripe patterns, optimal transport and the sharp-interface limit of a
nonlocal two-phase energy on thin tubular domains."""

__version__ = "0.1.0"
