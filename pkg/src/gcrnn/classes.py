"""The 17 event classes (Warning and Vehicle groups) and skew profiles."""

import numpy as np

CLASS_NAMES = [
    # Warning
    "Train horn",
    "Air horn, truck horn",
    "Car alarm",
    "Reversing beeps",
    "Ambulance (siren)",
    "Police car (siren)",
    "Fire engine, fire truck (siren)",
    "Civil defense siren",
    "Screaming",
    # Vehicle
    "Bicycle",
    "Skateboard",
    "Car",
    "Car passing by",
    "Bus",
    "Truck",
    "Motorcycle",
    "Train",
]
N_CLASSES = len(CLASS_NAMES)

LARGEST_CLASS = ("Car", 25744)
SMALLEST_CLASS = ("Car alarm", 273)


def skewed_counts(n_classes: int = N_CLASSES, largest: int = LARGEST_CLASS[1], smallest: int = SMALLEST_CLASS[1]) -> np.ndarray:
    """Clip counts falling geometrically from ``largest`` to ``smallest``.

    Index 0 is the largest class. Only the two end points are fixed; the
    classes in between are interpolated.
    """
    ratio = smallest / largest
    return np.round(largest * ratio ** (np.arange(n_classes) / (n_classes - 1))).astype(int)


def class_index(name: str, names=CLASS_NAMES) -> int:
    try:
        return list(names).index(name)
    except ValueError:
        raise ValueError(f"unknown class {name!r}") from None
