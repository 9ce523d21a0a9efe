"""Flat key-value run manifests.

A manifest records everything needed to repeat a run.  Its digest covers
every entry except the volatile ones (wall-clock time, thread count).  File
locations are left out of the digest as well, since input contents enter
through their own sha256 entries; reruns with different ``--threads`` or
output paths therefore produce byte-identical output headers.
"""

import hashlib
import json

from . import __version__

VOLATILE = ("elapsed_seconds", "threads", "digest")
# Flags whose values never change results: worker count and file locations.
UNDIGESTED_FLAGS = (
    "--threads", "--out", "--figure", "--control", "--profiles", "--mask",
    "--control-fit", "--scenario",
)


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def stable_argv(argv):
    """``argv`` without the flags in ``UNDIGESTED_FLAGS`` and their values."""
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
        elif tok in UNDIGESTED_FLAGS:
            skip = True
        elif tok.split("=", 1)[0] not in UNDIGESTED_FLAGS:
            out.append(tok)
    return out


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return json.dumps(list(value))
    return str(value)


class Manifest:
    def __init__(self, command, argv):
        self.entries = {"tool": "nmhmm", "version": __version__, "command": command,
                        "argv": json.dumps(list(argv))}

    def __setitem__(self, key, value):
        self.entries[key] = _fmt(value)

    def __getitem__(self, key):
        return self.entries[key]

    def update(self, items):
        for k, v in items:
            self[k] = v

    @property
    def digest(self):
        stable = "".join(
            f"{k}={v}\n" for k, v in self.entries.items() if k not in VOLATILE and k != "argv"
        )
        stable += "argv=" + json.dumps(stable_argv(json.loads(self.entries["argv"]))) + "\n"
        return hashlib.sha256(stable.encode("utf-8")).hexdigest()[:16]

    def header(self, **extra):
        parts = [f"nmhmm {__version__}", f"manifest={self.digest}"]
        parts += [f"{k}={_fmt(v)}" for k, v in extra.items()]
        return " ".join(parts)

    def write(self, path):
        self.entries["digest"] = self.digest
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for k, v in self.entries.items():
                fh.write(f"{k}={v}\n")


def read_manifest(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line and "=" in line:
                k, v = line.split("=", 1)
                out[k] = v
    return out
