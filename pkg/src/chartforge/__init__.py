"""chartforge: trace plotting scripts into instance masks, resolve referring
targets, and score grounding predictions with set-based metrics."""

__version__ = "0.1.0"
