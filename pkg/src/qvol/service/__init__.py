"""HTTP service exposing the fitting and estimation pipelines.

Run with ``uvicorn qvol.service:app`` or ``qvol serve``.
"""

from .app import app

__all__ = ["app"]
