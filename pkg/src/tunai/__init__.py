"""Tuna biomass estimation from echo-sounder buoys: ingestion, features, models, evaluation."""

__version__ = "0.1.0"
