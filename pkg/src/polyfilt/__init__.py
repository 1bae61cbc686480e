"""Optimal linear filtering, prediction and smoothing for polynomial processes."""
