"""behaviorlab: pipeline toolkit and evaluation harness for multi-human
behavior prediction over scene graphs."""

__version__ = "0.1.0"
