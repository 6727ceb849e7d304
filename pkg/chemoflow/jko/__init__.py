# Copyright 2021 The Chemoflow Authors.

from chemoflow.jko.blocks import *
from chemoflow.jko.config import *
from chemoflow.jko.engine import *
