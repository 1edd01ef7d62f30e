from .functions import *  # NOQA
from .safe_logger import *  # NOQA
