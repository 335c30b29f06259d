from __future__ import annotations

from dataclasses import dataclass

from anonpub.codec import decode_fields, encode_fields


@dataclass(frozen=True, slots=True)
class Name:
    """Hierarchical NDN name; the empty component tuple is the root ``/``."""

    components: tuple[bytes, ...]

    @classmethod
    def parse(cls, uri: str) -> "Name":
        parts = [p for p in uri.split("/") if p]
        return cls(tuple(p.encode() for p in parts))

    def __str__(self) -> str:
        return "/" + "/".join(c.decode("utf-8", "backslashreplace") for c in self.components)

    def __len__(self) -> int:
        return len(self.components)

    def append(self, *components: bytes | str | int) -> "Name":
        extra = []
        for c in components:
            if isinstance(c, int):
                c = str(c)
            if isinstance(c, str):
                c = c.encode()
            extra.append(c)
        return Name(self.components + tuple(extra))

    def is_prefix_of(self, other: "Name") -> bool:
        n = len(self.components)
        return other.components[:n] == self.components

    def prefix(self, n: int) -> "Name":
        return Name(self.components[:n])

    @property
    def byte_length(self) -> int:
        return sum(len(c) + 2 for c in self.components)

    def to_bytes(self) -> bytes:
        return encode_fields(self.components)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Name":
        return cls(tuple(decode_fields(data)))


ROOT = Name(())
