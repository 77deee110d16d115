"""Two-stage radio-resource allocation simulator for urban intersections."""

__version__ = "0.1.0"
