from .base_test import *  # NOQA
