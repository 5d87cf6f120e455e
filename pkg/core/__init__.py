"""Core modules for prefsim: fields, likelihood, inference and the experiment harness."""
