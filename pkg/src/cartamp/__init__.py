"""Task and motion planning with decision variables expressed as relative frame poses."""

__version__ = "0.1.0"
