from .api import cli

__all__ = ["cli"]
