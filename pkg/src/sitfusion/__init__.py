"""Situation fusion for driver/vehicle handover suitability.

Collects traffic, environment, vehicle and driver data, prepares it onto a
common time base, fuses it into per-area situations, stores them durably and
scores how suitable each situation is for a transition of control.
"""

__version__ = "0.1.0"
