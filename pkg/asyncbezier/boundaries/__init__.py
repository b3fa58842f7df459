"""Interfaces of the asyncbezier package: configuration, files, and CLI."""
