"""Wire protocol for live cockpit sessions.

Structured-text (JSON) messages, one per line/frame, tagged unions:

  client -> server:
    hello       {participant}
    start_trial {env, condition?, gamma?, rho?, beta?, anchor?, corruption?}
    input       {client_frame, u: [floats]}
    survey      {ease, control, effect}            # each 1..5
    end_trial   {}
  server -> client:
    trial_begin {trial_id, env, goal_prompt, frame_ms, action_dims}
    state       {frame, render, executed_u, hud}
    trial_result{outcome, time_s, collisions}
    error       {code, detail}

Unknown tags or malformed payloads are rejected with an ``error`` message
and must not mutate session state.
"""

import json

from ..errors import ConfigError

CLIENT_TAGS = ("hello", "start_trial", "input", "survey", "end_trial")
SERVER_TAGS = ("trial_begin", "state", "trial_result", "error")

_REQUIRED = {
    "hello": ("participant",),
    "start_trial": (),
    "input": ("client_frame", "u"),
    "survey": ("ease", "control", "effect"),
    "end_trial": (),
}

_OPTIONAL = {
    "hello": (),
    "start_trial": ("env", "condition", "gamma", "rho", "beta", "anchor",
                    "corruption"),
    "input": (),
    "survey": (),
    "end_trial": (),
}


def error_msg(code: str, detail: str) -> dict:
    return {"tag": "error", "code": code, "detail": detail}


def parse_client_message(raw) -> dict:
    """Decode and structurally validate one inbound message.

    Raises ConfigError on anything malformed; the session layer converts
    that into an ``error`` reply.
    """
    if isinstance(raw, (bytes, str)):
        try:
            msg = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"not valid JSON: {exc}") from exc
    else:
        msg = raw
    if not isinstance(msg, dict):
        raise ConfigError("message must be an object")
    tag = msg.get("tag")
    if tag not in CLIENT_TAGS:
        raise ConfigError(f"unknown tag {tag!r}")
    for key in _REQUIRED[tag]:
        if key not in msg:
            raise ConfigError(f"{tag}: missing field {key!r}")
    allowed = {"tag", *_REQUIRED[tag], *_OPTIONAL[tag]}
    extra = set(msg) - allowed
    if extra:
        raise ConfigError(f"{tag}: unexpected fields {sorted(extra)}")
    if tag == "survey":
        for key in ("ease", "control", "effect"):
            v = msg[key]
            if not isinstance(v, int) or not 1 <= v <= 5:
                raise ConfigError(f"survey.{key} must be an integer in 1..5")
    if tag == "input":
        u = msg["u"]
        if not isinstance(u, list) or not all(
                isinstance(v, (int, float)) for v in u):
            raise ConfigError("input.u must be a list of numbers")
        if not isinstance(msg["client_frame"], int):
            raise ConfigError("input.client_frame must be an integer")
    return msg


def encode(msg: dict) -> str:
    return json.dumps(msg, sort_keys=True)
