"""Rotated-box stomatal phenotyping toolkit.

Submodules: ``annot`` (types and file formats), ``rotgeom`` (rotated IoU),
``evaldet`` (detection metrics), ``agreement`` (manual vs predicted traits),
``phenotype`` (micrometre traits, density, conductance), ``quality`` (blur
triage and degradations), ``netops`` (feature fusion/filter operators),
``synth`` (synthetic scenes) and ``cli``.
"""
__version__ = "0.1.0"

from .annot import Label, LabeledBox, LabeledImage, RotatedBox
from .errors import ComputationError, InputError, StomakitError
from .rotgeom import rotated_iou

__all__ = [
    "Label", "LabeledBox", "LabeledImage", "RotatedBox", "rotated_iou",
    "StomakitError", "InputError", "ComputationError", "__version__",
]
