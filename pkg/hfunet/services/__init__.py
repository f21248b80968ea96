"""Domain services: phantoms, labels, networks, losses, metrics and the training pipeline."""
