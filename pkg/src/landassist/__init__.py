"""Shared-autonomy UAV landing laboratory.

Simulated platform worlds, a parametric simulated pilot, a depth-image
variational encoder, a TD3 landing assistant with a privileged critic, and a
live cockpit session server.
"""

__version__ = "0.1.0"
