"""Mechanically dressed NV spin simulator.

Configs may be given as a path, a dict, or JSON text. Frequencies are in kHz
and times in microseconds.
"""

import json
import os

from . import _cddsim
from ._cddsim import (
    ConfigError,
    IoError,
    NumericalError,
    UnboundedCoherence,
    envelope_second_order,
    predicted_t2_mp,
)

__all__ = [
    "ConfigError",
    "IoError",
    "NumericalError",
    "UnboundedCoherence",
    "envelope_second_order",
    "envelope_table",
    "load_config",
    "predicted_t2_mp",
    "rates",
    "run_ramsey",
]


def _text(config):
    if isinstance(config, dict):
        return json.dumps(config)
    if isinstance(config, os.PathLike) or (isinstance(config, str) and not config.lstrip().startswith("{")):
        return _cddsim.load_config(os.fspath(config))
    return config


def load_config(path):
    """Validated scenario as a dict, with every default filled in."""
    return json.loads(_cddsim.load_config(os.fspath(path)))


def rates(config):
    return _cddsim.rates(_text(config))


def run_ramsey(kind, config):
    """Trace columns plus a ``fit`` dict; ``metadata`` is decoded from JSON."""
    out = _cddsim.run_ramsey(kind, _text(config))
    out["metadata"] = json.loads(out["metadata"])
    return out


def envelope_table(config):
    return _cddsim.envelope_table(_text(config))
