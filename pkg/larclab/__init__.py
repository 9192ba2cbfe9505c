"""
larclab - a laboratory for union-of-subspaces Boolean functions
"""

__version__ = "0.3.0"
__author__ = "larclab developers"
