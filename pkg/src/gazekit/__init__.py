"""Eye-movement classification into fixations, saccades and smooth pursuits."""

__version__ = "0.1.0"
