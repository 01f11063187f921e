"""
Formatting utility functions.
"""

from decimal import ROUND_HALF_UP, Decimal


def round_millions(count: int) -> Decimal:
    """Count in millions, rounded half away from zero to one decimal."""
    return (Decimal(count) / Decimal(1_000_000)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)


def format_millions(count: int) -> str:
    """Format an exact count as one-decimal millions, e.g. 1050112 -> '1.1'."""
    return f"{round_millions(count)}"


def format_count(count: int) -> str:
    return f"{count:,}"


def format_percentage(fraction: float) -> str:
    return f"{fraction * 100:.1f}"
