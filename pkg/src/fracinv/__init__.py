"""Time-fractional heat equation: forward solver and leading-coefficient recovery."""
