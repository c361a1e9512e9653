from .api import *

__version__ = '0.1.0'
