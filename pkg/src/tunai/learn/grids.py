"""Hyper-parameter grid files: ``[kind:family]`` sections of ``name = v1, v2, ...``."""
from __future__ import annotations

import configparser
from importlib import resources

from ..evaluation import HyperGrid
from ..features import Task

DEFAULT_GRID = "grids.ini"


class GridError(ValueError):
    pass


def parse_value(text: str):
    t = text.strip()
    if t in ("None", "none", ""):
        return None
    if t in ("True", "true"):
        return True
    if t in ("False", "false"):
        return False
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def family(task) -> str:
    return "classification" if Task(task).is_classification else "regression"


def _read(path):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str
    if path is None:
        text = resources.files("tunai.data").joinpath(DEFAULT_GRID).read_text(encoding="utf-8")
        cp.read_string(text, source=DEFAULT_GRID)
    else:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    return cp


def load_grids(path=None) -> dict:
    """Map (kind, family) -> HyperGrid.

    A linear section's l1_ratio list is one candidate: the whole list is
    searched by the model's internal cross-validation.
    """
    try:
        cp = _read(path)
    except configparser.Error as exc:
        raise GridError(f"{path}: {exc}") from exc
    out = {}
    for sec in cp.sections():
        if ":" not in sec:
            raise GridError(f"{path or DEFAULT_GRID}: section [{sec}] is not kind:family")
        kind, fam = sec.split(":", 1)
        params = {k: [parse_value(v) for v in raw.split(",")] for k, raw in cp[sec].items()}
        if kind == "linear":
            params = {k: [tuple(v)] for k, v in params.items()}
        try:
            out[(kind, fam)] = HyperGrid(params)
        except ValueError as exc:
            raise GridError(f"[{sec}]: {exc}") from exc
    return out


def grid_for(kind: str, task, path=None) -> HyperGrid:
    if kind == "baseline":
        return HyperGrid({})
    grids = load_grids(path)
    key = (kind, family(task))
    if key not in grids:
        raise GridError(f"no [{kind}:{key[1]}] section in {path or DEFAULT_GRID}")
    return grids[key]
