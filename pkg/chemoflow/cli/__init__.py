# Copyright 2021 The Chemoflow Authors.

from chemoflow.cli.commands import *
from chemoflow.cli.config import *
from chemoflow.cli.main import *
