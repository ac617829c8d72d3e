"""Wildfire-occurrence prediction with a frozen pretrained transformer slice
as a fixed mid-network feature processor, plus four task-specific baselines.
"""

__version__ = "0.1.0"
