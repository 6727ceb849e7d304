# Copyright 2021 The Chemoflow Authors.

import sys

from chemoflow.cli import main

sys.exit(main())
