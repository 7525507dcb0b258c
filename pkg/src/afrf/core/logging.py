from __future__ import annotations
import threading
from contextlib import contextmanager, nullcontext
from typing import Optional

from colorama import Fore, Style, init as _colorama_init

_colorama_init(autoreset=True)


class TreeLogger:
    """A tree structured logger with color support.

    Usage:
        log = TreeLogger(run_id='pipeline')
        with log.branch('FEATURES'):
            log.log('SMOOTH', n_curves=100)
            with log.branch('FPCA'):
                log.log('FIT', r=1, k=10)
    """

    _local = threading.local()

    def __init__(self, run_id: Optional[str] = None, indent: int = 2):
        self.run_id = run_id or "-"
        self.indent = indent
        # width of the run id column
        self.id_width = 12

    @property
    def _stack(self):
        # each thread (joblib workers included) keeps its own stack
        if not hasattr(TreeLogger._local, "stack"):
            TreeLogger._local.stack = []
        return TreeLogger._local.stack

    @contextmanager
    def branch(self, operation: str, last: bool = False):
        """Enter a nested branch; last=True marks the last child at its level."""
        self._stack.append((operation, bool(last)))
        try:
            yield self
        finally:
            self._stack.pop()

    def _prefix(self) -> str:
        if not self._stack:
            return ""
        parts = []
        depth = len(self._stack)
        for i, (op, last_flag) in enumerate(self._stack):
            if i < depth - 1:
                parts.append(f"{Fore.MAGENTA}│   {Style.RESET_ALL}")
            else:
                marker = "└───" if last_flag else "├───"
                parts.append(f"{Fore.CYAN}{marker}{op}{Style.RESET_ALL}")
        return "".join(parts)

    def log(self, message: str, **meta):
        """Log an operation name with optional metadata printed as key=val."""
        color = Fore.CYAN
        upper = message.upper()
        if upper.startswith("DONE") or upper.startswith("WRITE"):
            color = Fore.GREEN
        elif upper.startswith("SKIP") or upper.startswith("WARN"):
            color = Fore.YELLOW
        elif upper.startswith("FAIL"):
            color = Fore.RED

        rid = meta.pop("run_id", None) or self.run_id
        meta_s = "".join(f" {Fore.YELLOW}{k}{Style.RESET_ALL}={_fmt(v)}" for k, v in meta.items())
        rid_str = rid[: self.id_width].ljust(self.id_width)
        id_part = f"| {Fore.GREEN}{rid_str}{Style.RESET_ALL} |"
        print(f"{id_part} {self._prefix()} {color}{message}{Style.RESET_ALL}{meta_s}")


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


# convenience global
default_logger: Optional[TreeLogger] = None


def init_logger(run_id: Optional[str] = None) -> TreeLogger:
    global default_logger
    default_logger = TreeLogger(run_id=run_id)
    return default_logger


def disable_logger() -> None:
    global default_logger
    default_logger = None


def log(message: str, **meta) -> None:
    if default_logger:
        default_logger.log(message, **meta)


def branch(operation: str, last: bool = False):
    if default_logger:
        return default_logger.branch(operation, last=last)
    return nullcontext()
