# Copyright 2021 The Chemoflow Authors.

version = "0.1.0"
