"""Text backends for the agent roles: scripted replays for tests, remote chat models for real runs."""

from __future__ import annotations

import json
import threading
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Mapping, Protocol, Sequence, runtime_checkable

from ..core import RasterImage
from ..remote import ChatClient

ROLES = ("dispatcher", "planner", "reasoner", "visual_critic", "planning_critic", "judge")
Capability = Literal["text-only", "vision+text"]


class ScriptExhausted(RuntimeError):
    pass


@runtime_checkable
class AgentBackend(Protocol):
    id: str
    capability: Capability

    def complete(self, role: str, system: str, user: str, images: Sequence[RasterImage] = ()) -> str: ...


class ScriptedBackend:
    """Replays canned replies per role in FIFO order and records every prompt.

    ``defaults`` gives a reply for roles whose queue is absent or empty; a role
    with neither raises :class:`ScriptExhausted`.
    """

    capability: Capability = "vision+text"

    def __init__(
        self,
        script: Mapping[str, Sequence[str]],
        defaults: Mapping[str, str] | None = None,
        id: str = "scripted",
    ) -> None:
        self.id = id
        self._queues = {role: deque(replies) for role, replies in script.items()}
        self.defaults = dict(defaults or {})
        self.calls: list[dict] = []
        self._lock = threading.Lock()

    @classmethod
    def from_json(cls, data: Mapping, id: str = "scripted") -> ScriptedBackend:
        script = {k: list(v) for k, v in data.items() if k != "defaults"}
        return cls(script, data.get("defaults"), id=id)

    @classmethod
    def from_file(cls, path: str | Path) -> ScriptedBackend:
        return cls.from_json(json.loads(Path(path).read_text()), id=f"scripted:{Path(path).stem}")

    def complete(self, role: str, system: str, user: str, images: Sequence[RasterImage] = ()) -> str:
        with self._lock:
            self.calls.append({"role": role, "system": system, "user": user, "images": [im.digest for im in images]})
            q = self._queues.get(role)
            if q:
                return q.popleft()
            if role in self.defaults:
                return self.defaults[role]
        raise ScriptExhausted(f"no scripted reply left for role {role!r}")

    def remaining(self) -> dict[str, int]:
        return {r: len(q) for r, q in self._queues.items()}

    def prompts(self, role: str) -> list[str]:
        return [c["user"] for c in self.calls if c["role"] == role]


@dataclass
class RemoteChatBackend:
    """A chat-completions model; text-only backends never receive pixels."""

    client: ChatClient
    id: str = "remote"
    capability: Capability = "vision+text"

    def complete(self, role: str, system: str, user: str, images: Sequence[RasterImage] = ()) -> str:
        imgs = list(images) if self.capability == "vision+text" else []
        return self.client.complete(system, user, imgs)


@dataclass
class Backends:
    """One backend per agent role; the same object may serve several roles."""

    dispatcher: AgentBackend
    planner: AgentBackend
    reasoner: AgentBackend
    visual_critic: AgentBackend
    planning_critic: AgentBackend
    extra: dict[str, AgentBackend] = field(default_factory=dict)

    @classmethod
    def single(cls, backend: AgentBackend) -> Backends:
        return cls(backend, backend, backend, backend, backend)
