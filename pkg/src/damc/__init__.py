"""Source-free domain adaptation with a bank of many classifier heads."""

__version__ = "0.1.0"
