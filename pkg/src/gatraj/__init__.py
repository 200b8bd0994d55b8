"""Trajectory prediction with attention encoding, graph interaction and a Laplacian mixture decoder."""
