"""Formatting helpers for console tables and log lines."""

import math


def format_count(count: int) -> str:
    """Format a count with K/M suffixes.

    Args:
        count: Number of parameters, images, ...

    Returns:
        str: Formatted count (e.g., '1.5K', '2.3M')
    """
    if count >= 1_000_000:
        return f"{count / 1_000_000:.1f}M"
    elif count >= 1_000:
        return f"{count / 1_000:.1f}K"
    else:
        return str(count)


def format_metric(value: float) -> str:
    """Four significant digits, or '-' for a missing/non-finite value."""
    if value is None or not math.isfinite(value):
        return "-"
    return f"{value:.4g}"


def format_percent(fraction: float) -> str:
    return f"{100 * fraction:.1f}%"


def format_duration(seconds: float) -> str:
    """Format elapsed seconds as a human-readable duration.

    Returns:
        str: Formatted duration (e.g., '2h 15m', '45m 30s', '12s')
    """
    total_seconds = int(seconds)

    hours = total_seconds // 3600
    minutes = (total_seconds % 3600) // 60
    secs = total_seconds % 60

    if hours > 0:
        return f"{hours}h {minutes}m"
    elif minutes > 0:
        return f"{minutes}m {secs}s"
    else:
        return f"{secs}s"
