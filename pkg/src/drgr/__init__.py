"""Deep reinforcement learning group recommender (DRGR) toolkit."""

__version__ = "0.1.0"
