from .problem_file import *  # NOQA
from .acceptance import *  # NOQA
from .kjet_cli import *  # NOQA
