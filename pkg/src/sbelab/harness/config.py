"""
Flat ``key = value`` experiment configuration files
"""
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple

from pydantic import ValidationError

from sbelab.common.config import get_settings
from sbelab.common.errors import ConfigError
from sbelab.models.schemas import ExperimentSpec, ModelConfig

MODEL_LEVEL_KEYS = ("dt", "T", "sigma", "N_ref", "M_list", "eps_list", "modes")
TRUE_WORDS = {"true", "yes", "1", "on"}
FALSE_WORDS = {"false", "no", "0", "off"}


def _bool(text: str) -> bool:
    word = text.strip().lower()
    if word in TRUE_WORDS:
        return True
    if word in FALSE_WORDS:
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int_list(text: str) -> Tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _float_list(text: str) -> Tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


MODEL_KEYS: Dict[str, Callable[[str], Any]] = {
    "model": str.strip,
    "theta": float,
    "sigma": float,
    "N": int,
    "dt": float,
    "T": float,
    "stride": int,
    "drift": _bool,
    "noise_scale": float,
    "record_noise": _bool,
}

SPEC_KEYS: Dict[str, Callable[[str], Any]] = {
    "experiment": str.strip,
    "paths": int,
    "modes": _int_list,
    "M_list": _int_list,
    "eps_list": _float_list,
    "N_list": _int_list,
    "N_ref": int,
    "T_list": _float_list,
    "dt_list": _float_list,
    "lambda_list": _float_list,
    "weight_eps": float,
    "p": float,
    "mode_k": int,
    "seed": int,
    "out": lambda text: Path(text.strip()),
}


def _describe(error: dict) -> str:
    field = str(error["loc"][-1]) if error.get("loc") else "config"
    ctx = error.get("ctx") or {}
    kind = error.get("type", "")
    if kind == "greater_than_equal":
        return f"{field} must be ≥ {ctx['ge']:g}"
    if kind == "greater_than":
        return f"{field} must be > {ctx['gt']:g}"
    if kind == "less_than":
        return f"{field} must be < {ctx['lt']:g}"
    if kind == "enum":
        return f"{field}: {error['msg']}"
    message = error["msg"]
    return message[len("Value error, "):] if message.startswith("Value error, ") else f"{field}: {message}"


def read_pairs(path: Path) -> Dict[str, Tuple[str, int]]:
    """key -> (raw value, line number); rejects duplicates and unknown keys"""
    pairs: Dict[str, Tuple[str, int]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {body!r}", detail={"line": lineno})
            key, value = (part.strip() for part in body.split("=", 1))
            if key not in MODEL_KEYS and key not in SPEC_KEYS:
                raise ConfigError(f"line {lineno}: unknown key {key!r}", detail={"line": lineno, "key": key})
            if key in pairs:
                first = pairs[key][1]
                raise ConfigError(
                    f"line {lineno}: duplicate key {key!r} (first set on line {first})",
                    detail={"lines": [first, lineno], "key": key},
                )
            pairs[key] = (value, lineno)
    return pairs


def parse_config(
    path: Path,
    experiment: Optional[str] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> ExperimentSpec:
    """
    Parse and validate an experiment file.

    ``experiment`` (the CLI subcommand) and ``overrides`` (CLI flags)
    take precedence over the file.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    pairs = read_pairs(path)
    lines = {key: lineno for key, (_, lineno) in pairs.items()}

    model_values: Dict[str, Any] = {}
    spec_values: Dict[str, Any] = {}
    for key, (raw, lineno) in pairs.items():
        convert = MODEL_KEYS.get(key) or SPEC_KEYS[key]
        try:
            value = convert(raw)
        except ValueError as e:
            raise ConfigError(f"line {lineno}: {key}: cannot parse {raw!r} ({e})", detail={"line": lineno}) from e
        (model_values if key in MODEL_KEYS else spec_values)[key] = value

    if experiment is not None:
        spec_values["experiment"] = experiment
    for key, value in (overrides or {}).items():
        if value is not None:
            spec_values[key] = value

    def fail(e: ValidationError) -> ConfigError:
        first = e.errors()[0]
        field = str(first["loc"][-1]) if first.get("loc") else ""
        if field not in lines:
            # model-level checks carry no location; attribute them to the key they name
            message = first["msg"].replace("Value error, ", "")
            field = next(
                (key for key in MODEL_LEVEL_KEYS
                 if message.startswith(key) or message.endswith(key) or f"{key}=" in message),
                field,
            )
        where = f"line {lines[field]}: " if field in lines else ""
        return ConfigError(f"{where}{_describe(first)}", detail={"errors": len(e.errors())})

    for required in ("model", "N", "dt", "T"):
        if required not in model_values:
            raise ConfigError(f"missing required key {required!r}")
    if "experiment" not in spec_values:
        raise ConfigError("no experiment given (CLI subcommand or 'experiment' key)")
    if "out" not in spec_values:
        spec_values["out"] = get_settings().output_root / f"{spec_values['experiment']}-{spec_values.get('seed', 0)}"
    try:
        config = ModelConfig(**model_values)
    except ValidationError as e:
        raise fail(e) from e
    try:
        return ExperimentSpec(config=config, **spec_values)
    except ValidationError as e:
        raise fail(e) from e
