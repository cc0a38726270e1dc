from .terms import *
