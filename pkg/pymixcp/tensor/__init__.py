"""This module implements dense tensor storage and the multilinear
primitives of CP decomposition: unfolding, Khatri-Rao products, CP
reconstruction and norms."""
from .base import *
from .operations import *
