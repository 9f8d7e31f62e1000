"""Alert triage for anti-money-laundering with profile and transaction-graph features."""
__version__ = "0.1.0"
