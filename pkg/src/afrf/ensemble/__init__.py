"""Learner side: classification trees, random forests and permutation importance."""
