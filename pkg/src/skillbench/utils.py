import json
import hashlib
import threading
from pathlib import Path
from typing import Any, Dict, Iterable, List, Union

UINT64_MASK = (1 << 64) - 1


def stable_hash64(text: str) -> int:
    """First 8 bytes of SHA-256(text) as an unsigned 64-bit integer."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def dumps_line(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def read_jsonl(path: Union[str, Path]) -> List[Dict[str, Any]]:
    """Read a JSONL file, skipping blank lines."""
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{lineno}: invalid JSON line: {e}") from e
    return rows


def write_jsonl(path: Union[str, Path], rows: Iterable[Any]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(dumps_line(row) + "\n")


class JsonlAppender:
    """Serializes appends to a JSONL file from concurrent trials."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        # truncate: one appender per run
        self.path.write_text("", encoding="utf-8")

    def append(self, row: Any) -> None:
        line = dumps_line(row) + "\n"
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(line)
