"""Kernel backend selection.

The hot loops (pseudo-volume occupancy queries, first-hit ray marching, and
the differentiable field renderer) exist twice: a compiled Cython extension
(``volsynth._kernels``) and a vectorized NumPy fallback
(``volsynth._kernels_np``).  The compiled core is preferred when importable;
set ``VOLSYNTH_BACKEND=python`` or ``compiled`` to force one side.

Both implementations follow the identical per-ray decision sequence, so they
agree on every mask/status bit and on float results to ~1e-12 relative.
"""

from __future__ import annotations

import os

from . import _kernels_np

_FORCED = os.environ.get("VOLSYNTH_BACKEND", "auto").lower()

_impl = None
_name = "python"

if _FORCED in ("auto", "compiled"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]

        _impl = _compiled
        _name = "compiled"
    except ImportError:
        if _FORCED == "compiled":
            raise ImportError(
                "VOLSYNTH_BACKEND=compiled but the volsynth._kernels extension "
                "is not built; reinstall with Cython available"
            )
if _impl is None:
    _impl = _kernels_np
    _name = "python"


def backend_name() -> str:
    return _name


def get_backend(name: str | None = None):
    """Return a kernel module by name ('compiled', 'python', or None=active)."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_np
    if name == "compiled":
        from . import _kernels  # raises ImportError when not built

        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def occupancy_states(points, pack, mode):
    return _impl.occupancy_states(
        points, pack.rot, pack.trans, pack.fx, pack.fy, pack.cx, pack.cy,
        pack.width, pack.height, pack.offsets, pack.depth, pack.valid, mode,
    )


def first_hit(points_args, march_args):
    """Thin dispatcher used by rendering; see _kernels_np.first_hit for the contract."""
    return _impl.first_hit(*points_args, *march_args)


def field_render_forward(*args):
    return _impl.field_render_forward(*args)


def field_render_backward(*args):
    return _impl.field_render_backward(*args)
