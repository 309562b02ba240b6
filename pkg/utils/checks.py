"""Argument check decorators and helpers."""
import functools
import inspect
from typing import Callable

import numpy as np

from utils.errors import SizeCapError, ValidationError


def check(predicate: Callable[[inspect.BoundArguments], None]):
    """Wrap a function so that ``predicate`` sees its bound arguments first.

    The predicate raises to reject the call; its return value is ignored.
    """
    def decorator(func):
        signature = inspect.signature(func)

        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            bound = signature.bind(*args, **kwargs)
            bound.apply_defaults()
            predicate(bound)
            return func(*args, **kwargs)
        return wrapper
    return decorator


def _dense(value):
    if hasattr(value, "to_dense"):
        return value.to_dense()
    return np.asarray(value)


def _shape(value):
    if hasattr(value, "shape"):
        return tuple(value.shape)
    return np.shape(value)


def square(*names: str):
    """Check that the named arguments are square matrices."""
    def predicate(bound: inspect.BoundArguments) -> None:
        for name in names:
            value = bound.arguments.get(name)
            if value is None:
                continue
            shape = _shape(value)
            if len(shape) != 2 or shape[0] != shape[1]:
                raise ValidationError(f"{name} must be square, got shape {shape}")
    return check(predicate)


def same_size(*names: str):
    """Check that the named matrices share their leading dimension."""
    def predicate(bound: inspect.BoundArguments) -> None:
        sizes = {
            name: _shape(bound.arguments[name])[0]
            for name in names if bound.arguments.get(name) is not None
        }
        if len(set(sizes.values())) > 1:
            raise ValidationError(f"size mismatch: {sizes}")
    return check(predicate)


def symmetric(*names: str, tol: float = 1e-10):
    """Check that the named matrices are symmetric to ``tol`` relative in Frobenius norm."""
    def predicate(bound: inspect.BoundArguments) -> None:
        for name in names:
            value = bound.arguments.get(name)
            if value is None:
                continue
            if getattr(value, "symmetric", False):
                continue
            M = _dense(value)
            scale = max(np.linalg.norm(M), 1.0)
            if np.linalg.norm(M - M.T) > tol * scale:
                raise ValidationError(f"{name} is not symmetric")
    return check(predicate)


def positive(*names: str):
    """Check that the named scalar arguments are strictly positive."""
    def predicate(bound: inspect.BoundArguments) -> None:
        for name in names:
            value = bound.arguments.get(name)
            if value is not None and not value > 0:
                raise ValidationError(f"{name} must be positive, got {value}")
    return check(predicate)


def size_cap(name: str, cap: int):
    """Check that the leading dimension of ``name`` does not exceed ``cap``."""
    def predicate(bound: inspect.BoundArguments) -> None:
        value = bound.arguments.get(name)
        if value is None:
            return
        n = _shape(value)[0]
        if n > cap:
            raise SizeCapError(f"{name} has size {n} above the cap {cap}")
    return check(predicate)


def require_finite(M: np.ndarray, name: str) -> None:
    """Raise ValidationError if ``M`` holds NaN or infinite entries."""
    if not np.all(np.isfinite(M)):
        raise ValidationError(f"{name} has non-finite entries")
