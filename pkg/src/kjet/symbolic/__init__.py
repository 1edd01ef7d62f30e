from .kjet_parser import *  # NOQA
from .kjet_symbolic import *  # NOQA
