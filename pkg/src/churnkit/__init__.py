"""Game churn prediction toolkit.

End-to-end desk-scale churn pipeline: synthetic action-log generation,
log parsing, feature engineering, feature selection, three model families
(extremely randomized trees, conditional-inference survival ensembles,
LSTM+MLP), competition metrics, and a cross-validation harness with a CLI.
"""

__version__ = "0.1.0"
