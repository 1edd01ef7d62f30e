from .kjet_semispray import *  # NOQA
