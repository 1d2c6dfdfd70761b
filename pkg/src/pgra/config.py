"""INI experiment configuration.

Every key has a type and a default; unknown sections or keys are rejected.
Values can be overridden from the environment with variables named
``PGRA__<SECTION>__<KEY>`` (case-insensitive). Problems are reported as
``ConfigError`` carrying the file and line of the offending entry.
"""

import configparser
import hashlib
import os
import re
from pathlib import Path

from .agent import ALGORITHMS, TrainConfig
from .schedule import LearningRateSchedule, PowerRate

ENV_PREFIX = "PGRA__"


class ConfigError(ValueError):
    pass


def _float(s):
    return float(s)


def _int(s):
    v = float(s)
    if not v.is_integer():
        raise ValueError("expected an integer")
    return int(v)


def _bool(s):
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


def _opt_float(s):
    return None if s.strip().lower() in ("", "none") else float(s)


def _opt_path(s):
    return None if s.strip().lower() in ("", "none") else s.strip()


def _floats(n):
    def parse(s):
        parts = s.replace(",", " ").split()
        if len(parts) != n:
            raise ValueError(f"expected {n} numbers")
        return tuple(float(p) for p in parts)
    return parse


def _segments(s):
    if s.strip().lower() in ("", "none"):
        return ()
    return tuple(_floats(4)(chunk) for chunk in s.split(";") if chunk.strip())


def _choice(*options):
    def parse(s):
        v = s.strip().lower()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v
    return parse


def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return "; ".join(" ".join(repr(x) for x in seg) for seg in v)
        return " ".join(repr(x) for x in v) if v else "none"
    return str(v)


def _rate_keys(name, initial, exponent, offset):
    return {
        f"{name}_initial": (_float, initial),
        f"{name}_exponent": (_float, exponent),
        f"{name}_offset": (_float, offset),
    }


SCHEMA = {
    "run": {
        "algorithm": (_choice(*ALGORITHMS), "ac-ra"),
        "episodes": (_int, 1000),
        "seed": (_int, 0),
        "checkpoint_every": (_int, 0),
        "allow_invalid_schedule": (_bool, False),
    },
    "env": {
        "type": (_choice("maze", "recsys"), "maze"),
    },
    "maze": {
        "n_actuators": (_int, 8),
        "actuator_magnitude": (_float, 0.05),
        "step_penalty": (_float, -0.05),
        "goal_reward": (_float, 100.0),
        "noise_prob": (_float, 0.1),
        "max_steps": (_int, 150),
        "start": (_floats(2), (0.1, 0.1)),
        "goal": (_floats(2), (0.1, 0.9)),
        "goal_radius": (_float, 0.05),
        "walls": (_segments, ((0.0, 0.5, 0.7, 0.5),)),
        "fourier_order": (_int, 3),
    },
    "recsys": {
        "mdp": (_opt_path, None),
        "click_log": (_opt_path, None),
        "n_items": (_int, 1498),
        "n_sessions": (_int, 20000),
        "session_length": (_floats(2), (2.0, 20.0)),
        "popularity_skew": (_float, 1.1),
        "jump_prob": (_float, 0.2),
        "n_successors": (_int, 5),
        "log_seed": (_int, 0),
        "min_clicks": (_int, 100),
        "ngram": (_int, 2),
        "d_item": (_int, 8),
        "horizon": (_int, 20),
        "boost": (_float, 3.0),
        "mdp_seed": (_int, 0),
    },
    "agent": {
        "d_e": (_int, 2),
        "gamma": (_float, 0.99),
        "lam": (_float, 0.9),
        "sigma": (_float, 0.25),
        "learn_sigma": (_bool, False),
        "projection_bound": (_opt_float, None),
        "similarity": (_choice("sqeuclid", "dot"), "sqeuclid"),
        "tau": (_float, 1.0),
        "representation_frozen": (_bool, False),
        "replay_batch": (_int, 0),
        "unbiased": (_bool, False),
        "baseline_window": (_int, 100),
    },
    "init": {
        "trajectories": (_int, 2000),
        "lr": (_float, 1.0),
        "batch_size": (_int, 32),
        "max_epochs": (_int, 200),
        "window": (_int, 10),
        "tol": (_float, 1e-4),
        "scale": (_float, 0.1),
    },
    "schedule": {
        **_rate_keys("critic", 0.01, 0.6, 1e5),
        **_rate_keys("representation", 0.01, 0.8, 1e5),
        **_rate_keys("actor", 0.01, 1.0, 1e5),
    },
}

_PATH_KEYS = {("recsys", "mdp"), ("recsys", "click_log")}


def _line_map(text):
    """(section, key) -> 1-based line number of its definition."""
    out = {}
    section = None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip().lower()
            out[(section, None)] = i
            continue
        m = re.match(r"([^=:#;\s][^=:]*?)\s*[=:]", s)
        if m and section is not None:
            out[(section, m.group(1).strip().lower())] = i
    return out


class ExperimentConfig:
    """Typed, fully resolved configuration."""

    def __init__(self, values, source=None):
        self.values = values
        self.source = source

    def __getitem__(self, section):
        return self.values[section]

    def with_seed(self, seed):
        vals = {s: dict(kv) for s, kv in self.values.items()}
        vals["run"]["seed"] = int(seed)
        return ExperimentConfig(vals, self.source)

    def render(self):
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            for key in keys:
                lines.append(f"{key} = {_fmt(self.values[section][key])}")
            lines.append("")
        return "\n".join(lines)

    def digest(self):
        """Hash of the resolved settings with the seed zeroed, shared by all seeds of a sweep."""
        return hashlib.sha256(self.with_seed(0).render().encode()).hexdigest()[:16]


def parse_config(text, source="<string>", environ=None, base_dir=None):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        parser.read_string(text, source=str(source))
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        if lineno is None and getattr(exc, "errors", None):
            lineno = exc.errors[0][0]
        where = f"{source}:{lineno}" if lineno else str(source)
        msg = exc.message if hasattr(exc, "message") else str(exc)
        raise ConfigError(f"{where}: {msg.splitlines()[0]}") from None
    lines = _line_map(text)
    raw = {}
    for section in parser.sections():
        sec = section.lower()
        if sec not in SCHEMA:
            ln = lines.get((sec, None))
            raise ConfigError(f"{source}:{ln}: unknown section [{section}]; "
                              f"expected one of {', '.join(SCHEMA)}")
        for key, value in parser.items(section):
            if key not in SCHEMA[sec]:
                ln = lines.get((sec, key))
                raise ConfigError(f"{source}:{ln}: [{sec}] unknown key {key!r}")
            raw[(sec, key)] = (value, f"{source}:{lines.get((sec, key))}")
    for name, value in (environ if environ is not None else os.environ).items():
        if not name.upper().startswith(ENV_PREFIX):
            continue
        parts = name[len(ENV_PREFIX):].lower().split("__")
        if len(parts) != 2 or parts[0] not in SCHEMA or parts[1] not in SCHEMA[parts[0]]:
            raise ConfigError(f"environment variable {name}: no such config entry")
        raw[(parts[0], parts[1])] = (value, f"environment variable {name}")
    values = {}
    for sec, keys in SCHEMA.items():
        values[sec] = {}
        for key, (conv, default) in keys.items():
            if (sec, key) not in raw:
                values[sec][key] = default
                continue
            text_value, where = raw[(sec, key)]
            try:
                v = conv(text_value)
            except ValueError as exc:
                raise ConfigError(f"{where}: [{sec}] {key} = {text_value!r}: {exc}") from None
            if (sec, key) in _PATH_KEYS and v is not None and base_dir is not None:
                p = Path(v)
                v = str(p if p.is_absolute() else (Path(base_dir) / p).resolve())
            values[sec][key] = v
    cfg = ExperimentConfig(values, source)
    _check(cfg, raw)
    return cfg


def load_config(path, environ=None):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config(path.read_text(), str(path), environ, base_dir=path.parent)


def _check(cfg, raw):
    """Cross-field validation, reported against the most relevant entry."""
    def fail(sec, key, msg):
        where = raw.get((sec, key), (None, str(cfg.source)))[1]
        raise ConfigError(f"{where}: [{sec}] {key}: {msg}")

    if cfg["run"]["episodes"] <= 0:
        fail("run", "episodes", "must be > 0")
    if cfg["run"]["checkpoint_every"] < 0:
        fail("run", "checkpoint_every", "must be >= 0")
    if not 0.0 <= cfg["agent"]["gamma"] < 1.0:
        fail("agent", "gamma", "must lie in [0, 1)")
    if cfg["agent"]["sigma"] <= 0:
        fail("agent", "sigma", "must be > 0")
    if cfg["agent"]["d_e"] < 1:
        fail("agent", "d_e", "must be >= 1")
    for name in ("critic", "representation", "actor"):
        for part, ok, msg in (("initial", lambda v: v >= 0, "must be >= 0"),
                              ("exponent", lambda v: 0 <= v <= 1, "must lie in [0, 1]"),
                              ("offset", lambda v: v > 0, "must be > 0")):
            key = f"{name}_{part}"
            if not ok(cfg["schedule"][key]):
                fail("schedule", key, msg)
    if cfg["env"]["type"] == "maze":
        try:
            maze_config(cfg)
        except ValueError as exc:
            keys = [k for k in SCHEMA["maze"] if k in str(exc)] or ["n_actuators"]
            fail("maze", keys[0], str(exc))


def schedule_from(cfg):
    s = cfg["schedule"]
    return LearningRateSchedule(*(
        PowerRate.starting_at(s[f"{n}_initial"], s[f"{n}_exponent"], s[f"{n}_offset"])
        for n in ("critic", "representation", "actor")))


def maze_config(cfg):
    from .envs.maze import MazeConfig

    m = cfg["maze"]
    return MazeConfig(m["n_actuators"], m["actuator_magnitude"], m["step_penalty"],
                      m["goal_reward"], m["noise_prob"], m["max_steps"], m["start"], m["goal"],
                      m["goal_radius"], m["walls"], m["fourier_order"])


def build_recsys_mdp(cfg):
    from .envs import recsys

    r = cfg["recsys"]
    if r["mdp"] is not None:
        return recsys.load_mdp(r["mdp"])
    if r["click_log"] is not None:
        records = recsys.read_click_log(r["click_log"])
    else:
        lo, hi = (int(v) for v in r["session_length"])
        records = recsys.synthesize_log(r["n_items"], r["n_sessions"], (lo, hi),
                                        r["popularity_skew"], r["log_seed"],
                                        r["n_successors"], r["jump_prob"])
    ing = recsys.ingest_click_log(records, r["min_clicks"])
    return recsys.build_ngram_mdp(ing.sequences, r["ngram"], ing.items, r["mdp_seed"],
                                  r["d_item"], boost=r["boost"], horizon=r["horizon"])


def build_env(cfg):
    if cfg["env"]["type"] == "maze":
        from .envs.maze import Maze

        return Maze(maze_config(cfg))
    from .envs.recsys import RecSys

    return RecSys(build_recsys_mdp(cfg))


def train_config(cfg, env=None):
    a, i, run = cfg["agent"], cfg["init"], cfg["run"]
    return TrainConfig(
        env=build_env(cfg) if env is None else env,
        algorithm=run["algorithm"], d_e=a["d_e"], gamma=a["gamma"], lam=a["lam"],
        sigma=a["sigma"], learn_sigma=a["learn_sigma"], projection_bound=a["projection_bound"],
        schedule=schedule_from(cfg), n_init_trajectories=i["trajectories"], init_lr=i["lr"],
        init_batch_size=i["batch_size"], init_max_epochs=i["max_epochs"],
        init_window=i["window"], init_tol=i["tol"], init_scale=i["scale"],
        similarity=a["similarity"], tau=a["tau"], total_episodes=run["episodes"],
        seed=run["seed"], representation_frozen=a["representation_frozen"],
        replay_batch=a["replay_batch"], unbiased=a["unbiased"],
        baseline_window=a["baseline_window"],
        allow_invalid_schedule=run["allow_invalid_schedule"],
    )
