"""firerisk: link municipal property datasets, discover inspectable
commercial properties, score their fire risk, and serve the results."""

__version__ = "0.1.0"
