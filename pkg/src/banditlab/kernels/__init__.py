"""Simulation hot loops with a compiled core and a pure-numpy fallback.

The compiled extension is preferred when built; both backends consume the
same bit-generator streams in the same draw order and produce bit-identical
results:

* ``simulate_user_day`` / ``simulate_day_batch`` draw, per user-day, one
  uniform for the activity gate, then per slot ``m_avail`` uniforms for the
  available-topic shuffle followed by exactly 7 outcome uniforms in the order
  play, loop, completed, skip, comment, share, like.
* ``beta_argmax_counts`` / ``beta_argmax_batch`` draw one beta variate per
  topic per round, topics in ascending index order.
"""

from __future__ import annotations

from . import _pykernels

try:
    from . import _ckernels

    _impl = _ckernels
    BACKEND = "cython"
except ImportError:  # extension not built on this install
    _impl = _pykernels
    BACKEND = "python"

simulate_user_day = _impl.simulate_user_day
simulate_day_batch = _impl.simulate_day_batch
beta_argmax_counts = _impl.beta_argmax_counts
beta_argmax_batch = _impl.beta_argmax_batch


def get_backend(name: str):
    """Return a kernel module by name ('cython' or 'python'); for benchmarks."""
    if name == "python":
        return _pykernels
    if name == "cython":
        if BACKEND != "cython":
            raise RuntimeError("compiled kernels are not available")
        return _ckernels
    raise ValueError(f"unknown backend: {name}")


def available_backends() -> list[str]:
    return ["cython", "python"] if BACKEND == "cython" else ["python"]
