# Copyright (c) infernode contributors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Python bindings for the infernode pipeline.

Configs are the same JSON documents the command line driver reads. Every
function accepts a path to a config file or an already loaded dict; relative
paths inside a dict resolve against ``base_dir``.
"""

import json
import os

from . import _core
from ._core import Error, allocate_cores, fp16_round, ne_metric

__all__ = [
    "Error",
    "allocate_cores",
    "fp16_round",
    "generate",
    "hardware_summary",
    "load_config",
    "ne_metric",
    "partition",
    "quantize",
    "simulate",
    "sweep",
    "validate",
]


def load_config(path, overrides=()):
    """Reads a config file and applies ``key=value`` overrides."""
    with open(path) as f:
        text = f.read()
    for o in overrides:
        text = _core.apply_override(text, o)
    return json.loads(text)


def _resolve(config, base_dir):
    if isinstance(config, (str, os.PathLike)):
        path = os.fspath(config)
        if not os.path.exists(path):
            raise FileNotFoundError(path)
        base = base_dir if base_dir is not None else os.path.dirname(os.path.abspath(path))
        return load_config(path), base
    return config, base_dir if base_dir is not None else os.getcwd()


def _args(config, base_dir):
    c, base = _resolve(config, base_dir)
    return json.dumps(c), base


def generate(config, base_dir=None):
    """Workload graph as JSON text."""
    return _core.generate(*_args(config, base_dir))


def quantize(config, base_dir=None, graph=None):
    """Returns (assignment text, quantized graph JSON)."""
    return _core.quantize(*_args(config, base_dir), graph)


def partition(config, base_dir=None, graph=None):
    """Execution plan as JSON text."""
    return _core.partition(*_args(config, base_dir), graph)


def simulate(config, base_dir=None, plan=None):
    """Report metrics as an ordered dict of name to number."""
    rows = _core.simulate(*_args(config, base_dir), plan)
    return {k: float(v) for k, v in rows}


def sweep(config, base_dir=None):
    """Sweep table as a list of dicts (one per point)."""
    lines = _core.sweep(*_args(config, base_dir)).strip().splitlines()
    header = lines[0].split(",")
    out = []
    for line in lines[1:]:
        cells = line.split(",")
        row = {header[0]: json.loads(cells[0]) if cells[0][:1] in "-0123456789[{\"tfn" else cells[0]}
        row.update({h: float(v) for h, v in zip(header[1:], cells[1:])})
        out.append(row)
    return out


def validate(cases=1000, seed=20210901):
    """Returns (ok, text) for the bitexact cross-check corpus."""
    return _core.validate(cases, seed)


def hardware_summary(hardware=None):
    """Summary text for a hardware config dict (default node when None)."""
    return _core.hardware_summary(None if hardware is None else json.dumps(hardware))
