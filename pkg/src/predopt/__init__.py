"""Decision-focused learning with SPO+ over knapsack and scheduling oracles."""

__version__ = "0.1.0"
