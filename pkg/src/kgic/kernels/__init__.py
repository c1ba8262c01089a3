"""Embedding kernels with backend selection at import.

The compiled Cython module is preferred when present; the numpy reference
implementation is the fallback and the ground truth for semantics.  Set
KGIC_PURE_PYTHON=1 to force the fallback (useful for the cross-backend
tests and the benchmark in benchmarks/bench_kernels.py).
"""

import os

from kgic.kernels import _pykern

if os.environ.get("KGIC_PURE_PYTHON") == "1":
    _impl = _pykern
else:
    try:
        from kgic.kernels import _ckern as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pykern

BACKEND: str = _impl.BACKEND
neg_dist_to_rows = _impl.neg_dist_to_rows
transe_train_batch = _impl.transe_train_batch
rotate_train_batch = _impl.rotate_train_batch

__all__ = [
    "BACKEND",
    "neg_dist_to_rows",
    "transe_train_batch",
    "rotate_train_batch",
]
