from .models import *  # NOQA
