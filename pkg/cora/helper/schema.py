import argparse
import math

from ..errors import ConfigError

# ─────────────────────────────────────────────────────────────────────────────
# Parameter specs use the node-input layout:
#   name -> (TYPE, {"default", "min", "max", "step", "tooltip"})
#   name -> ([choice, ...], {"default"})
# TYPE is one of INT, FLOAT, BOOLEAN, STRING, PATH, INT_LIST.
# The same specs drive JSON config validation and argparse options.
# ─────────────────────────────────────────────────────────────────────────────


def _range_check(key, value, opts):
    lo, hi = opts.get("min"), opts.get("max")
    if lo is not None and value < lo:
        raise ConfigError(key, f"{value} is below the minimum {lo} (expected range [{lo}, {hi}])")
    if hi is not None and value > hi:
        raise ConfigError(key, f"{value} is above the maximum {hi} (expected range [{lo}, {hi}])")


def validate_value(key: str, value, spec):
    typ = spec[0]
    opts = spec[1] if len(spec) > 1 else {}

    if isinstance(typ, list):
        if value not in typ:
            raise ConfigError(key, f"'{value}' is not one of {typ}")
        return value

    if typ == "INT":
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        value = int(value)
        _range_check(key, value, opts)
        return value

    if typ == "FLOAT":
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(key, f"expected a finite number, got {value!r}")
        value = float(value)
        _range_check(key, value, opts)
        return value

    if typ == "BOOLEAN":
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected true or false, got {value!r}")
        return value

    if typ in ("STRING", "PATH"):
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
        return value

    if typ == "INT_LIST":
        if not isinstance(value, (list, tuple)):
            raise ConfigError(key, f"expected a list of integers, got {value!r}")
        return [validate_value(f"{key}[{i}]", v, ("INT", opts)) for i, v in enumerate(value)]

    raise ConfigError(key, f"unknown parameter type {typ!r}")


def fill_section(schema: dict, values: dict, section: str = "") -> dict:
    """Validate ``values`` against a flat schema, reject unknown keys, fill defaults."""
    prefix = f"{section}." if section else ""
    unknown = sorted(set(values) - set(schema))
    if unknown:
        raise ConfigError(prefix + unknown[0], f"unknown key (allowed: {sorted(schema)})")
    out = {}
    for key, spec in schema.items():
        if key in values and values[key] is not None:
            out[key] = validate_value(prefix + key, values[key], spec)
        else:
            default = spec[1].get("default") if len(spec) > 1 else None
            out[key] = list(default) if isinstance(default, (list, tuple)) else default
    return out


def flat_inputs(input_types: dict) -> dict:
    return {**input_types.get("required", {}), **input_types.get("optional", {})}


def add_arguments(parser: argparse.ArgumentParser, input_types: dict) -> None:
    """Required inputs become positionals, optional ones --flags."""
    for name, spec in input_types.get("required", {}).items():
        parser.add_argument(name, help=spec[1].get("tooltip") if len(spec) > 1 else None,
                            **_arg_kwargs(spec, positional=True))
    for name, spec in input_types.get("optional", {}).items():
        opts = spec[1] if len(spec) > 1 else {}
        flag = "--" + name.replace("_", "-")
        parser.add_argument(flag, dest=name, default=opts.get("default"),
                            help=opts.get("tooltip"), **_arg_kwargs(spec, positional=False))


def _arg_kwargs(spec, positional: bool) -> dict:
    typ = spec[0]
    if isinstance(typ, list):
        return {"choices": typ}
    if typ == "INT":
        return {"type": int}
    if typ == "FLOAT":
        return {"type": float}
    if typ == "BOOLEAN":
        return {} if positional else {"action": argparse.BooleanOptionalAction}
    if typ == "INT_LIST":
        return {"type": int, "nargs": "+"}
    return {"type": str}


def validate_inputs(input_types: dict, values: dict) -> dict:
    schema = flat_inputs(input_types)
    checked = {}
    for key, value in values.items():
        if key in schema and value is not None and not (schema[key][0] == "PATH" and value == ""):
            checked[key] = validate_value(key, value, schema[key])
        else:
            checked[key] = value
    return checked
