"""Test package for prefsim."""
