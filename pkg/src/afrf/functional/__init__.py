"""Curve side: loading, B-spline smoothing, FPCA, augmented features and simulated scenarios."""
