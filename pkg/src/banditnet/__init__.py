"""Scheduling in adversarial multi-hop queueing networks under bandit feedback."""

from banditnet._kernels import BACKEND
from banditnet.network import Topology, queue_l1, realize_transmissions, step

__version__ = "0.1.0"

__all__ = ["BACKEND", "Topology", "queue_l1", "realize_transmissions", "step", "__version__"]
