"""Mini-Former: a Bi-LSTM + attention translator and a Transformer baseline on numpy."""

__version__ = "0.1.0"
