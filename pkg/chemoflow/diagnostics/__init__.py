# Copyright 2021 The Chemoflow Authors.

from chemoflow.diagnostics.checks import *
from chemoflow.diagnostics.rates import *
