"""
Collections of custom data structures and types.
"""
import copy

import numpy as np

from .exceptions import ConfigError


class dotdict(dict):
    """dot.notation access to dictionary attributes"""

    __getattr__ = dict.get
    __setattr__ = dict.__setitem__
    __delattr__ = dict.__delitem__

    # now pickleable!!!
    def __getstate__(self):
        return dict(self)

    def __setstate__(self, state):
        self.update(state)


def merge(defaults, overrides, _prefix=""):
    """Recursively overlays `overrides` on a deep copy of `defaults`.
    Keys that do not exist in `defaults` are rejected, nested dicts are merged
    level by level and returned as `dotdict`s.

    :param defaults: Default configuration
    :type defaults: dict
    :param overrides: User-supplied values, may be partial
    :type overrides: dict
    :raises ConfigError: If `overrides` contains a key unknown to `defaults` (empty
        default mappings accept any key)
    :return: Merged configuration
    :rtype: dotdict
    """
    merged = dotdict(copy.deepcopy(dict(defaults)))
    for key, value in (overrides or {}).items():
        address = f"{_prefix}{key}"
        if key not in merged:
            raise ConfigError(address, "unknown configuration key")
        if isinstance(merged[key], dict) and len(merged[key]) == 0 and isinstance(value, dict):
            # empty defaults are free-form mappings (e.g. per-modality input dims)
            merged[key] = dotdict(copy.deepcopy(value))
        elif isinstance(merged[key], dict) and isinstance(value, dict):
            merged[key] = merge(merged[key], value, _prefix=address + ".")
        else:
            merged[key] = copy.deepcopy(value)
    # nested plain dicts become dotdicts as well
    for key, value in merged.items():
        if isinstance(value, dict) and not isinstance(value, dotdict):
            merged[key] = merge(value, {}, _prefix=f"{_prefix}{key}.")
    return merged


def toJsonable(value):
    """Converts numpy scalars and arrays inside (nested) containers to plain python
    types so that they can be written with `json.dump`.
    """
    if isinstance(value, dict):
        return {str(k): toJsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [toJsonable(v) for v in value]
    if isinstance(value, set):
        return sorted(toJsonable(v) for v in value)
    if isinstance(value, np.ndarray):
        return toJsonable(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        value = float(value)
    if isinstance(value, float) and not np.isfinite(value):
        # json has no NaN, keep the file strictly valid
        return None
    return value
