"""Bounds on the entanglement of formation between a Kondo impurity and its cloud."""

import json

from ._core import (
    ConfigError,
    InsufficientDataError,
    OutOfRangeError,
    PowerLawFit,
    RunConfig,
    YosidaState,
    __version__,
    _run_experiment,
    _verify,
    cloud_size,
    concurrence,
    config_keys,
    eof,
    eof_from_concurrence,
    fit_power_law,
    kondo_temperature,
    outside_probability,
    preset,
    yosida_eof,
    yosida_state,
)


def make_config(preset_name="paper", **values):
    """RunConfig from a preset with keys overridden (values as in the config file)."""
    cfg = preset(preset_name)
    for key, value in values.items():
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        cfg.set(key, str(value))
    cfg.validate()
    return cfg


def run_experiment(config, workers=1, log=None):
    """Run the grid and return the result manifest as a dict."""
    return json.loads(_run_experiment(config, workers, log))


def verify(states=1000, seed=2024):
    """Exact cross-checks; a list of dicts with name, passed, worst, tolerance."""
    return _verify(states, seed)
