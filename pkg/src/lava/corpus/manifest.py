"""JSON-Lines dataset manifests."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

TECHNOLOGIES = ("ASV", "FoR", "Codec")
MODELS = ("F01", "F02", "F03", "F04", "F05", "F06")
AUTHENTICITY = ("real", "fake")
SPLITS = ("train", "val", "test")
FIELDS = ("path", "technology", "model", "authenticity", "split")


class ManifestError(ValueError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.field = field


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    technology: str | None
    model: str | None
    authenticity: str
    split: str

    def __post_init__(self):
        self.validate()

    def validate(self, line: int | None = None) -> None:
        def bad(field, msg):
            raise ManifestError(msg, line, field)

        if not isinstance(self.path, str) or not self.path:
            bad("path", "must be a non-empty string")
        if self.technology is not None and self.technology not in TECHNOLOGIES:
            bad("technology", f"{self.technology!r} not in {TECHNOLOGIES}")
        if self.model is not None and self.model not in MODELS:
            bad("model", f"{self.model!r} not in {MODELS}")
        if self.authenticity not in AUTHENTICITY:
            bad("authenticity", f"{self.authenticity!r} not in {AUTHENTICITY}")
        if self.split not in SPLITS:
            bad("split", f"{self.split!r} not in {SPLITS}")
        if self.model is not None and self.technology != "Codec":
            bad("model", f"model {self.model} requires technology 'Codec', "
                         f"got {self.technology!r}")
        if self.authenticity == "real" and (self.technology or self.model):
            bad("technology" if self.technology else "model",
                "real audio cannot carry technology or model labels")

    @property
    def is_fake(self) -> bool:
        return self.authenticity == "fake"

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(", ", ": "))


Manifest = list[ManifestEntry]


def _entry_from_obj(obj, line: int) -> ManifestEntry:
    if not isinstance(obj, dict):
        raise ManifestError("expected a JSON object", line)
    for name in obj:
        if name not in FIELDS:
            raise ManifestError("unknown field", line, name)
    for name in FIELDS:
        if name not in obj:
            raise ManifestError("missing field", line, name)
    try:
        return ManifestEntry(**obj)
    except ManifestError as exc:
        raise ManifestError(str(exc).split(": ", 1)[-1], line, exc.field) from None


def parse_manifest(text: str) -> Manifest:
    entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"invalid JSON: {exc.msg}", lineno) from None
        entries.append(_entry_from_obj(obj, lineno))
    return entries


def read_manifest(path) -> Manifest:
    return parse_manifest(Path(path).read_text(encoding="utf-8"))


def write_manifest(entries, path) -> None:
    lines = [e.to_json() + "\n" for e in entries]
    Path(path).write_text("".join(lines), encoding="utf-8")


def resolve(entry: ManifestEntry, manifest_path) -> Path:
    """Entry paths are relative to the manifest's directory unless absolute."""
    p = Path(entry.path)
    return p if p.is_absolute() else Path(manifest_path).parent / p


def select(entries, split=None, authenticity=None, technology=None) -> Manifest:
    return [e for e in entries
            if (split is None or e.split == split)
            and (authenticity is None or e.authenticity == authenticity)
            and (technology is None or e.technology == technology)]
