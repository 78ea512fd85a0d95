"""Algebraic multigrid preconditioning with coarsening by compatible weighted matching."""
