"""Attribute neutralization for chest radiographs: editing, auditing, diagnosis and statistics."""

__version__ = "0.1.0"
