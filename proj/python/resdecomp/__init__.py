"""Direct-contribution analysis of toy transformer in-context learning."""

import json

from ._core import (
    Error,
    InputError,
    ModelConfig,
    RunConfig,
    decompose,
    forward,
    generate_pattern_task,
    init_random,
    load_task,
    load_weights,
    paired_t_test,
    pearson,
    save_task,
    save_weights,
    top_k_iou,
)
from . import _core


def _config(model, task, **kw):
    c = RunConfig()
    c.model = str(model)
    c.task = str(task)
    for key, value in kw.items():
        setattr(c, key, value)
    return c


def evaluate(model, task, demo_sets=1, templates=1, **kw):
    return json.loads(_core._eval(_config(model, task, **kw), demo_sets, templates))


def reweight(model, task, runs=1, **kw):
    return json.loads(_core._reweight(_config(model, task, **kw), runs))


def calibrate(model, task, runs=1, **kw):
    return json.loads(_core._calibrate(_config(model, task, **kw), runs))


def agreement(model, task, variation="demos", runs=3, **kw):
    return json.loads(_core._agreement(_config(model, task, **kw), variation, runs))


def prune(model, task, top=5, bottom=5, **kw):
    return json.loads(_core._prune(_config(model, task, **kw), top, bottom))
