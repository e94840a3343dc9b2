"""GP seabed-complexity modelling and safe-path planning for marine vessels."""

__version__ = "0.1.0"
