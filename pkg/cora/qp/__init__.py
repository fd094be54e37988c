"""Primal active-set solver for convex QPs with one equality row."""
