"""
Configuration package for the rough path recursion laboratory
"""

from .config import *
