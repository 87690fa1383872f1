"""Kernel primitives for streamslu: features, losses, tape and layout."""

from .ctc import LossResult, ctc_loss
from .ctl import CtlTarget, ctl_loss
from .layout import LayoutResolver, RunLayout
from .tape import Tape, Var

__all__ = [
    "CtlTarget",
    "LayoutResolver",
    "LossResult",
    "RunLayout",
    "Tape",
    "Var",
    "ctc_loss",
    "ctl_loss",
]
