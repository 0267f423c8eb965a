"""Optimal memory sampling for a reader tracking a randomly updated memory.

Closed forms for threshold policies, a truncated-grid DP solver and a
slot-level simulator, with cross-checks between the three.
"""

__version__ = "0.1.0"
