"""Canonical variable name tuples shared by synthesis, autocoding, and checking."""

from __future__ import annotations


def group(prefix: str, dim: int) -> tuple[str, ...]:
    return tuple(f"{prefix}_{i}" for i in range(dim))


def x_vars(n: int) -> tuple[str, ...]:
    return group("x", n)


def xc_vars(nc: int) -> tuple[str, ...]:
    return group("xc", nc)


def xhat_vars(n: int) -> tuple[str, ...]:
    return group("xhat", n)


def u_vars(m: int) -> tuple[str, ...]:
    return group("u", m)


def y_vars(p: int) -> tuple[str, ...]:
    return group("y", p)


def yc_vars(p: int) -> tuple[str, ...]:
    return group("yc", p)


def r_vars(p: int) -> tuple[str, ...]:
    return group("r", p)


def e_vars(n: int) -> tuple[str, ...]:
    return group("e", n)


def next_vars(vars_: tuple[str, ...]) -> tuple[str, ...]:
    return tuple(v + "__next" for v in vars_)
