"""daekron batch pipeline - reduction, energies, closed-loop tables."""
