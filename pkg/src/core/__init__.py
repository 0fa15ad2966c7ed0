"""Solvers, problems and oracle accounting for min-min strongly convex problems."""
