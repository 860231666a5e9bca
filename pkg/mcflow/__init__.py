"""
mcflow - graphical mean curvature flow solved as a heat-kernel fixed point,
with numerical certificates for every estimate the construction relies on.
"""

__version__ = "0.1.0"
