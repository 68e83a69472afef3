"""gmtk: geometric measure theory toolkit on weighted point clouds."""

__version__ = "0.1.0"
