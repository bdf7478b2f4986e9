"""STEP (ISO 10303-21) files to entity graphs, with GCN classification and retrieval."""
from stepgraph._backend import BACKEND

__version__ = "0.1.0"
