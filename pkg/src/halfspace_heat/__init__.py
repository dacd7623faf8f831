"""Heat kernels of degenerate half-space operators."""
