from .kjet_integrator import *  # NOQA
