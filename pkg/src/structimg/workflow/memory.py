"""Planner-owned image memory: every intermediate image, kept as a tree rooted at the query image."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from ..core import RasterImage


class UnknownImageId(KeyError):
    def __str__(self) -> str:
        return f"unknown image id {self.args[0]!r}"


class MemoryCorrupt(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class MemoryEntry:
    image_id: str
    image: RasterImage
    description: str
    parent_id: str | None = None
    producing_action: str | None = None
    rejected: bool = False


class ImageMemory:
    def __init__(self) -> None:
        self._entries: dict[str, MemoryEntry] = {}

    def put(
        self,
        image: RasterImage,
        description: str,
        parent_id: str | None = None,
        action: str | None = None,
        rejected: bool = False,
    ) -> str:
        if not description:
            raise ValueError("memory entries need a description")
        if parent_id is None and self._entries:
            raise ValueError("memory already has a root; pass a parent_id")
        if parent_id is not None and parent_id not in self._entries:
            raise UnknownImageId(parent_id)
        image_id = f"img_{len(self._entries)}"
        self._entries[image_id] = MemoryEntry(image_id, image, description, parent_id, action, rejected)
        return image_id

    def get(self, image_id: str) -> MemoryEntry:
        try:
            return self._entries[image_id]
        except KeyError:
            raise UnknownImageId(image_id) from None

    def __contains__(self, image_id: object) -> bool:
        return image_id in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[MemoryEntry]:
        return iter(self._entries.values())

    @property
    def root(self) -> str | None:
        return next(iter(self._entries), None)

    def edges(self) -> list[tuple[str, str]]:
        return [(e.parent_id, e.image_id) for e in self if e.parent_id is not None]

    def children(self, image_id: str) -> list[str]:
        return [c for p, c in self.edges() if p == image_id]

    def max_branching(self) -> int:
        counts: dict[str, int] = {}
        for p, _ in self.edges():
            counts[p] = counts.get(p, 0) + 1
        return max(counts.values(), default=0)

    def check_tree(self) -> None:
        roots = [e.image_id for e in self if e.parent_id is None]
        if len(self) and len(roots) != 1:
            raise MemoryCorrupt(f"expected one root, found {roots}")
        for e in self:
            seen = {e.image_id}
            cur = e.parent_id
            while cur is not None:
                if cur not in self._entries:
                    raise MemoryCorrupt(f"{e.image_id} has a missing ancestor {cur}")
                if cur in seen:
                    raise MemoryCorrupt(f"cycle through {cur}")
                seen.add(cur)
                cur = self._entries[cur].parent_id

    def pool_listing(self) -> str:
        lines = []
        for e in self:
            parent = f" (from {e.parent_id})" if e.parent_id else ""
            flag = " [rejected by visual critic]" if e.rejected else ""
            lines.append(f"- {e.image_id}{parent}: {e.description}{flag}")
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {
            "entries": [
                {
                    "image_id": e.image_id,
                    "parent_id": e.parent_id,
                    "description": e.description,
                    "producing_action": e.producing_action,
                    "rejected": e.rejected,
                    "digest": e.image.digest,
                    "size": [e.image.width, e.image.height],
                }
                for e in self
            ],
            "edges": [list(x) for x in self.edges()],
        }
