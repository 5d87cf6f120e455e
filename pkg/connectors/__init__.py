"""Connectors package for external data sources."""
