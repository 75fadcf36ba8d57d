"""Privacy-preserving broadcast with virtual-source token passing."""
