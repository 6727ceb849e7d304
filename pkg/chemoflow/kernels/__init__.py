# Copyright 2021 The Chemoflow Authors.

from chemoflow.kernels.radial import *
from chemoflow.kernels.resolvent import *
from chemoflow.kernels.suite import *
