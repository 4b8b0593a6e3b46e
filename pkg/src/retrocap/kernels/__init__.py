"""Scan-kernel backend selection.

The compiled Cython kernel is preferred when its extension imported
cleanly; otherwise the pure-NumPy twin takes over. Set RETROCAP_PURE=1
to force the fallback (benchmarks and backend-parity tests use this).
"""

from __future__ import annotations

import os

from . import scan_np

if os.environ.get("RETROCAP_PURE") == "1":
    _backend = scan_np
else:
    try:
        from . import _scan_cy as _backend  # type: ignore[attr-defined]
    except ImportError:
        _backend = scan_np

scan_forward = _backend.scan_forward
scan_backward = _backend.scan_backward
SMALL_AD = scan_np.SMALL_AD


def backend_name() -> str:
    return _backend.name


def available_backends() -> dict[str, object]:
    """All importable kernel modules keyed by name."""
    out = {scan_np.name: scan_np}
    try:
        from . import _scan_cy

        out[_scan_cy.name] = _scan_cy
    except ImportError:
        pass
    return out
