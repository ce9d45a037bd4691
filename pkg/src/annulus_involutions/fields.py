"""Catalog of built-in example fields, each a center with a period annulus."""

from __future__ import annotations

from .errors import ConfigError
from .expr import PlanarField

# name -> (P, Q, domain box, first integral, default x-axis section range)
_BUILTINS = {
    "linear-center": ("-y", "x", (-4.0, 4.0, -4.0, 4.0), "(x^2 + y^2)/2", (0.2, 2.0)),
    "pendulum": ("y", "-sin(x)", (-3.14, 3.14, -2.6, 2.6), "y^2/2 + 1 - cos(x)", (0.3, 2.5)),
    "duffing": ("y", "-x - x^3", (-4.0, 4.0, -4.0, 4.0), "y^2/2 + x^2/2 + x^4/4", (0.3, 1.5)),
    "cubic-center": ("-y^3", "x^3", (-4.0, 4.0, -4.0, 4.0), "(x^4 + y^4)/4", (0.25, 2.0)),
}


def builtin_names() -> list[str]:
    return list(_BUILTINS)


def builtin_field(name: str) -> PlanarField:
    try:
        p, q, domain, hamiltonian, _ = _BUILTINS[name]
    except KeyError:
        raise ConfigError(
            f"unknown built-in field {name!r}; available: {', '.join(_BUILTINS)}"
        ) from None
    return PlanarField.from_strings(p, q, name=name, domain=domain, hamiltonian=hamiltonian)


def default_section_range(name: str) -> tuple[float, float]:
    """Parameter range of the default positive-x-axis seed section."""
    if name not in _BUILTINS:
        raise ConfigError(f"unknown built-in field {name!r}")
    return _BUILTINS[name][4]
