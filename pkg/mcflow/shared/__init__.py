"""Shared plumbing: models, errors, settings, logging and artifact storage."""
