"""Developer-productivity analytics over git histories and forge snapshots."""

__version__ = "0.1.0"
