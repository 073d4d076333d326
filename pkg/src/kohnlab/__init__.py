"""kohnlab: exact and numerical checks for the tangential CR complex on
decoupled model hypersurfaces Im w = sum_j P_j(z_j)."""

__version__ = "0.1.0"
