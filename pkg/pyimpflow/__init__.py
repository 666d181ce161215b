from .errors import *
from .logger import log
from .network import *
from .training import *
from .tasks import *
from .imp import *
from .rganalysis import *
from .transfer import *
from . import io
from .config import *
from .harness import *
