"""Python access to the bsim traffic simulation core."""

import json

from . import _core
from ._core import BsimError, distance_map, emd_points, ou_perturb, sigmoid, step, wrap_angle

__all__ = [
    "BsimError",
    "default_config",
    "distance_map",
    "emd_points",
    "eval",
    "expert_log",
    "gen",
    "ou_perturb",
    "sigmoid",
    "sim",
    "step",
    "sweep",
    "train",
    "wrap_angle",
]


def _text(config):
    if config is None:
        return ""
    return config if isinstance(config, str) else json.dumps(config)


def default_config():
    return json.loads(_core.default_config())


def resolve_config(config=None):
    return json.loads(_core.resolve_config(_text(config)))


def expert_log(kind="straight", agents=4, seconds=10.0, seed=0):
    return _core.expert_log(kind, agents, seconds, seed)


def gen(config=None):
    return _core.gen(_text(config))


def train(config=None):
    return _core.train(_text(config))


def sim(config=None):
    return _core.sim(_text(config))


def eval(config=None):  # noqa: A001
    return json.loads(_core.eval(_text(config)))


def sweep(config, axis):
    return json.loads(_core.sweep(_text(config), axis))


def plot(rollout, out=""):
    return _core.plot(rollout, out)
