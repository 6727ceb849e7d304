# Copyright 2021 The Chemoflow Authors.

from chemoflow.__version__ import version as __version__
from chemoflow.diagnostics import *
from chemoflow.domain import *
from chemoflow.entropy import *
from chemoflow.errors import *
from chemoflow.jko import *
from chemoflow.kernels import *
from chemoflow.stationary import *
from chemoflow.transport import *
