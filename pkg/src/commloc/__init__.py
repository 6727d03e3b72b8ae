"""Communication-based relative localization and collision-cone avoidance
for small teams of simulated micro air vehicles."""

__version__ = "0.1.0"
