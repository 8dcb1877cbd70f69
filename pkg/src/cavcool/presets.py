"""Named scenario presets in canonical dict form."""

from __future__ import annotations

from .errors import ConfigurationError


def names():
    from .scenarios import PRESETS

    return sorted(PRESETS)


def preset_scenario(name, master_seed=0):
    from .scenarios import PRESETS

    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; expected one of {names()}", "preset")
    return PRESETS[name](master_seed=master_seed)


def preset_dict(name):
    """Canonical scenario dict of preset ``name``; user keys merge over it."""
    from .config import to_dict

    return to_dict(preset_scenario(name))
