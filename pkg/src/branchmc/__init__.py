"""branchmc - marked branching-diffusion Monte Carlo for semilinear PDEs and FBSDEs."""

__version__ = "0.1.0"
