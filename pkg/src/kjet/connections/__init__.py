from .kjet_connections import *  # NOQA
