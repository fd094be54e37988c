"""Coalitions, advantage tables and the core allocation QP."""
