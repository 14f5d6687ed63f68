"""Numerical kernel backend selection.

The hot loops (projection, collision checking, edge validation, embedding
SGD) exist twice: compiled Cython kernels in ``conplan._ckern`` and a plain
NumPy/Python fallback in ``conplan._pykern``. The compiled module is used
when importable; set ``CONPLAN_KERNELS=python`` or ``=c`` to force one.

Call sites go through this module's attributes (``_kernels.project(...)``)
so the active backend can also be swapped at runtime with :func:`use`
(handy in tests and the kernel benchmark).
"""

import os

from . import _pykern

_FORWARDED = [
    "backend_name",
    "splitmix64_next",
    "chain_fk",
    "chain_points",
    "chain_jacobian",
    "dls_ik",
    "system_fk",
    "residual",
    "residual_jacobian",
    "project",
    "self_collision_free",
    "obstacles_collision_free",
    "config_collision_free",
    "edge_waypoints",
    "waypoints_collision_free",
    "umap_optimize",
]

PROJECT_OK = _pykern.PROJECT_OK
PROJECT_MAXITER = _pykern.PROJECT_MAXITER


def available_backends():
    names = ["python"]
    try:
        from . import _ckern  # noqa: F401
        names.insert(0, "c")
    except ImportError:
        pass
    return names


def _module_for(name):
    if name == "python":
        return _pykern
    if name == "c":
        from . import _ckern
        return _ckern
    raise ValueError(f"unknown kernel backend {name!r} (expected 'c' or 'python')")


def use(name):
    """Switch the active backend; returns the name actually in effect."""
    mod = _module_for(name)
    g = globals()
    for fn in _FORWARDED:
        g[fn] = getattr(mod, fn)
    g["active_backend"] = name
    return name


def kernel_backend():
    """Name of the backend currently in effect ('c' or 'python')."""
    return active_backend


def _initial_backend():
    forced = os.environ.get("CONPLAN_KERNELS", "").strip().lower()
    if forced in ("c", "python"):
        return forced
    return available_backends()[0]


use(_initial_backend())
