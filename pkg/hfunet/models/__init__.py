"""Pydantic data contracts shared across services."""
