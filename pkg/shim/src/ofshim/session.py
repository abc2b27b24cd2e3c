"""Kernel transport: one CLI subprocess per session, statements in, lines out.

The wire format is the CLI's own statement language. Each round trip appends
a probe statement whose output is a session-unique token; everything the
kernel prints before the token belongs to the round. stderr is merged into
stdout so error lines arrive in statement order. The shim never looks inside
cell values beyond this framing, and the framing itself only compares whole
lines against the token and the kernel's fixed "error: " prefix.
"""

import os
import shutil
import subprocess
import sys
import tempfile
import uuid

_SENTINEL = "__shim_probe"


class ShimError(Exception):
    """Base for everything the shim raises."""


class KernelProcessError(ShimError):
    """The kernel subprocess died or could not be started."""


class KernelStatementError(ShimError):
    """The kernel rejected a statement; the session stays usable."""


def quote(text: str) -> str:
    """Statement-language string literal for text."""
    body = (
        text.replace("\\", "\\\\")
        .replace('"', '\\"')
        .replace("\n", "\\n")
        .replace("\t", "\\t")
    )
    return f'"{body}"'


def _default_cli() -> list:
    found = shutil.which("orderframe")
    if found:
        return [found]
    return [sys.executable, "-m", "orderframe.cli"]


class KernelSession:
    """Owns the subprocess and the probe round-trip protocol."""

    def __init__(self, cli=None, mode=None, threads=None, block_shape=None,
                 cache_bytes=None):
        argv = list(cli) if cli is not None else _default_cli()
        if mode is not None:
            argv += ["--mode", mode]
        if threads is not None:
            argv += ["--threads", str(threads)]
        if block_shape is not None:
            argv += ["--block-shape", block_shape]
        if cache_bytes is not None:
            argv += ["--cache-bytes", str(cache_bytes)]
        self._token = uuid.uuid4().hex
        fd, self._probe_path = tempfile.mkstemp(suffix=".csv", prefix="ofshim_")
        with os.fdopen(fd, "w") as f:
            f.write(f"k\n{self._token}\n")
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.STDOUT,
                text=True,
            )
        except OSError as exc:
            os.unlink(self._probe_path)
            raise KernelProcessError(f"cannot start kernel: {exc}") from exc
        self._names = 0
        self.send([f"{_SENTINEL} = read_csv({quote(self._probe_path)})"])

    def fresh_name(self) -> str:
        self._names += 1
        return f"_f{self._names}"

    def send(self, statements) -> list:
        """Run statements in order; returns the lines they printed.

        Raises KernelStatementError after draining the round when any
        statement failed, so the subprocess never goes out of sync.
        """
        if self._proc.poll() is not None:
            raise KernelProcessError("kernel process has exited")
        payload = "".join(s + "\n" for s in statements)
        payload += f"get_cell({_SENTINEL}, 0, 0)\n"
        try:
            self._proc.stdin.write(payload)
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError) as exc:
            raise KernelProcessError("kernel pipe closed") from exc
        lines, errors = [], []
        while True:
            line = self._proc.stdout.readline()
            if not line:
                raise KernelProcessError(
                    "kernel exited mid-statement; partial output: "
                    + "\n".join(lines[-5:])
                )
            text = line.rstrip("\n")
            if text == self._token:
                break
            if text.startswith("error: "):
                errors.append(text[len("error: "):])
            else:
                lines.append(text)
        if errors:
            raise KernelStatementError("; ".join(errors))
        return lines

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except (BrokenPipeError, ValueError):
                pass
            self._proc.wait(timeout=10)
        if self._probe_path is not None:
            try:
                os.unlink(self._probe_path)
            except OSError:
                pass
            self._probe_path = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass
