# Copyright 2021 The Chemoflow Authors.
