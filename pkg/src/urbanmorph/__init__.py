"""Urban form descriptors from footprints and streets, related to zone outcomes
through a two-stage spatial regression."""

__version__ = "0.1.0"
