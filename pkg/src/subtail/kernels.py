"""Kernel backend selection: compiled extension if built, numpy fallback otherwise."""

from __future__ import annotations

from subtail import _greedy_fallback

try:
    from subtail import _greedy as _impl

    KERNEL_BACKEND = "compiled"
except ImportError:  # extension not built; fall back to pure numpy
    _impl = _greedy_fallback
    KERNEL_BACKEND = "python"

greedy_capacity_assign = _impl.greedy_capacity_assign
greedy_capacity_assign_fallback = _greedy_fallback.greedy_capacity_assign
