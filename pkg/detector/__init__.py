"""Wikidata vandalism detection pipeline."""

__version__ = "1.0.0"
