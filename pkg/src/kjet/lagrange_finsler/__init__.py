from .kjet_lagrange import *  # NOQA
