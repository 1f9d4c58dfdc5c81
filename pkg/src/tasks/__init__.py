"""Tasks package - classification, best responses and the clearing solvers."""
