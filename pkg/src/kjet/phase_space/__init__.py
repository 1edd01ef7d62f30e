from .kjet_phase_space import *  # NOQA
