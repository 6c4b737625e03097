"""Dense-user / sparse-item matrix factorization for collaborative filtering."""
