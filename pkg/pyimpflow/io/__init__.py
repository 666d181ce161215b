from .tracefile import *
from .summary import *
