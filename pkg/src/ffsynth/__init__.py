"""Synthesis of compactly supported potentials with a prescribed far-field pattern."""
