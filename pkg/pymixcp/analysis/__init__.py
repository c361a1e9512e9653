"""This module implements the cost model of the mixed-precision gradient,
the rank thresholds of local strong convexity, and a Jacobian rank test
that certifies local strong convexity numerically."""
from .convexity import *
from .cost import *
from .rank import *
