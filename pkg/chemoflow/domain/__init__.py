# Copyright 2021 The Chemoflow Authors.

from chemoflow.domain.fields import *
from chemoflow.domain.grid import *
from chemoflow.domain.model import *
