"""Compile analytical queries into federated-analytics operation DAGs and
simulate their execution under additive homomorphic encryption and
differential privacy."""

__version__ = "0.1.0"
