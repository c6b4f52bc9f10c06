"""Dynamical decoupling sequence workbench.

Simulates a qubit coupled to a small spin bath under piecewise-constant
pulse control, scores sequences by a trace-norm figure of merit, and
searches for good sequences with generative sequence models (n-gram and
recurrent networks) in an estimation-of-distribution loop.
"""

__version__ = "0.1.0"
