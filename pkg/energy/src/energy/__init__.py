"""Energy functions and polynomial feedback for quadratic Stokes-type DAEs."""
