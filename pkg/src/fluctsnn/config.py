"""Sectioned key=value experiment configuration.

The config format is flat INI-style text: [section] headers, key = value
lines, # comments.  Every key has a default; unknown sections or keys are
errors naming the offender.  Command-line overrides ("section.key=value")
take precedence over file values, which take precedence over defaults.

Layer syntax (network.layers, comma separated):
  "128"        dense layer of 128 neurons
  "128r"       with recurrent connections
  "128s"       with a skip connection to the readout
  "128e32i"    Dale layer with 128 excitatory and 32 inhibitory neurons
Flags combine, e.g. "256rs".
"""

from __future__ import annotations

import configparser
import io
import re


class ConfigError(ValueError):
    pass


# default (string form), parsed type
_SCHEMA: dict[str, dict[str, tuple[str, type]]] = {
    "dataset": {
        "kind": ("randman", str),  # randman | shd | spikepack | poisson
        "path": ("", str),
        "seed": ("0", int),
        "classes": ("10", int),
        "samples_per_class": ("1000", int),
        "n_units": ("20", int),
        "manifold_dim": ("1", int),
        "alpha_smooth": ("1.0", float),
        "t_active": ("100.0", float),
        "t_pad": ("100.0", float),
        "nu": ("10.0", float),  # poisson only, Hz
        "duration": ("200.0", float),  # poisson only, ms
        "n_samples": ("1", int),  # poisson only
        "valid_frac": ("0.1", float),
    },
    "network": {
        "layers": ("128", str),
        "dt": ("2.0", float),  # ms
        "tau_mem": ("20.0", float),  # ms
        "tau_syn": ("10.0", float),
        "tau_mem_inh": ("10.0", float),
        "tau_syn_inh": ("5.0", float),
        "tau_out": ("", float),  # blank: stimulus duration
        "surrogate_beta": ("20.0", float),
        "surrogate_rescaled": ("false", bool),
    },
    "init": {
        "strategy": ("fluctuation", str),  # fluctuation | kaiming
        "family": ("normal", str),  # normal | exponential | lognormal
        "mu_u": ("0.0", float),
        "sigma_u": ("1.0", float),
        "xi": ("", float),  # alternative to sigma_u
        "alpha": ("0.9", float),
        "nu": ("", float),  # blank: measured dataset mean rate
        "nu_hidden": ("", float),  # blank: same as nu
        "seed": ("0", int),
    },
    "training": {
        "epochs": ("200", int),
        "batch_size": ("400", int),
        "optimizer": ("smorms3", str),
        "lr": ("0.05", float),
        "lambda_upper": ("0.0", float),
        "v_upper": ("", float),  # blank: duration(ms)/100
        "lambda_lower": ("0.0", float),
        "v_lower": ("1.0", float),
        "priming_epochs": ("0", int),
        "ongoing_homeostasis": ("false", bool),
        "seed": ("0", int),
        "workers": ("1", int),
        "probe_gradients": ("false", bool),
    },
    "output": {
        "dir": ("out", str),
        "plots": ("true", bool),
    },
    "simulate": {
        "record_membrane": ("false", bool),
        "no_reset": ("false", bool),
        "max_samples": ("16", int),
    },
}

_BOOL = {"true": True, "false": False, "1": True, "0": False,
         "yes": True, "no": False}


def _coerce(section: str, key: str, raw: str):
    default, typ = _SCHEMA[section][key]
    raw = raw.strip()
    if raw == "":
        return None if default == "" else _coerce(section, key, default)
    try:
        if typ is bool:
            return _BOOL[raw.lower()]
        return typ(raw)
    except (ValueError, KeyError):
        raise ConfigError(
            f"bad value for {section}.{key}: {raw!r} (expected {typ.__name__})"
        ) from None


def default_config() -> dict[str, dict[str, object]]:
    return {
        section: {key: _coerce(section, key, default) for key, (default, _) in keys.items()}
        for section, keys in _SCHEMA.items()
    }


def _apply(cfg, section: str, key: str, raw: str) -> None:
    if section not in _SCHEMA:
        raise ConfigError(f"unknown section [{section}]")
    if key not in _SCHEMA[section]:
        raise ConfigError(f"unknown key {section}.{key}")
    cfg[section][key] = _coerce(section, key, raw)


def load_config(path=None, overrides=()) -> dict[str, dict[str, object]]:
    """Resolve defaults, then the file at path, then override strings."""
    cfg = default_config()
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        parser.optionxform = str  # keys are case-sensitive
        with open(path) as fh:
            parser.read_file(fh)
        for section in parser.sections():
            for key, raw in parser.items(section):
                _apply(cfg, section, key, raw)
    for item in overrides:
        m = re.fullmatch(r"([^.=\s]+)\.([^.=\s]+)=(.*)", item.strip())
        if not m:
            raise ConfigError(f"override must be section.key=value, got {item!r}")
        _apply(cfg, *m.groups())
    return cfg


def format_config(cfg) -> str:
    """Effective config as the same sectioned key=value text."""
    out = io.StringIO()
    for section, keys in cfg.items():
        out.write(f"[{section}]\n")
        for key, value in keys.items():
            if value is None:
                out.write(f"{key} =\n")
            elif isinstance(value, bool):
                out.write(f"{key} = {'true' if value else 'false'}\n")
            else:
                out.write(f"{key} = {value}\n")
        out.write("\n")
    return out.getvalue()


def write_config(path, cfg) -> None:
    with open(path, "w") as fh:
        fh.write(format_config(cfg))


_LAYER_RE = re.compile(r"^(\d+)(?:e(\d+)i)?([rs]*)$")


def parse_layers(text: str) -> list[dict]:
    """Parse the layer list syntax into dicts consumed by the network builder."""
    layers = []
    for entry in text.split(","):
        entry = entry.strip().lower()
        if not entry:
            continue
        m = _LAYER_RE.match(entry)
        if not m:
            raise ConfigError(f"bad layer spec {entry!r}")
        size, inh, flags = m.groups()
        layers.append(
            {
                "n_exc" if inh else "n": int(size),
                **({"n_inh": int(inh)} if inh else {}),
                "recurrent": "r" in flags,
                "skip": "s" in flags,
            }
        )
    if not layers:
        raise ConfigError("network.layers must name at least one layer")
    return layers
