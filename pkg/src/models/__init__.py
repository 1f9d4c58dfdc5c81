"""Models package - networks, demand curves, scenarios and solver results."""
