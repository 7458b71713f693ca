"""
Run Tracker Module
Records what a solver run logs, how long its sections take, and which
warnings and failures it met.
"""

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, Iterator, List, Optional

from src.config import config

LOGGER_NAME = "inertia_control"


@dataclass
class LogEntry:
    """One recorded event of a run."""
    timestamp: str
    level: int  # a `logging` level
    message: str
    exception: Optional[str] = None
    context: Dict = field(default_factory=dict)

    @property
    def level_name(self) -> str:
        return logging.getLevelName(self.level)

    def to_dict(self) -> Dict:
        """Convert to dictionary."""
        return {
            "timestamp": self.timestamp,
            "level": self.level_name,
            "message": self.message,
            "exception": self.exception,
            "context": self.context,
        }

    def __str__(self) -> str:
        line = f"[{self.timestamp[11:19]}] {self.level_name}: {self.message}"
        if self.exception:
            line += f"\n  {self.exception}"
        return line


class RunTracker:
    """
    Logs run events to the console and a run log, and keeps them in memory
    so reports can list warnings and timings.
    """

    def __init__(
        self,
        log_to_file: bool = True,
        log_to_console: bool = True,
        log_dir: Optional[str] = None
    ):
        """
        Initialize the tracker.

        Args:
            log_to_file: Write `config.log_filename` into `log_dir`.
            log_to_console: Echo entries of level INFO and above.
            log_dir: Directory of the run log (defaults to the output directory).
        """
        self.log_to_console = log_to_console
        self.entries: List[LogEntry] = []
        self.timings: Dict[str, float] = {}
        self.logger: Optional[logging.Logger] = None
        if log_to_file:
            self._open_log(Path(log_dir or config.output_directory))

    @classmethod
    def silent(cls) -> "RunTracker":
        """Tracker that only records entries in memory."""
        return cls(log_to_file=False, log_to_console=False)

    def _open_log(self, log_dir: Path) -> None:
        log_dir.mkdir(parents=True, exist_ok=True)
        self.log_file = log_dir / config.log_filename

        self.logger = logging.getLogger(LOGGER_NAME)
        self.logger.setLevel(logging.DEBUG)
        self.logger.propagate = False
        self.close()

        handler = logging.FileHandler(self.log_file, encoding='utf-8')
        handler.setFormatter(logging.Formatter(
            '%(asctime)s - %(levelname)s - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        ))
        self.logger.addHandler(handler)

    def close(self) -> None:
        """Release the run log."""
        if self.logger is not None:
            for handler in list(self.logger.handlers):
                handler.close()
                self.logger.removeHandler(handler)

    @property
    def warnings(self) -> List[LogEntry]:
        return [e for e in self.entries if e.level == logging.WARNING]

    @property
    def errors(self) -> List[LogEntry]:
        return [e for e in self.entries if e.level >= logging.ERROR]

    def _record(
        self,
        level: int,
        message: str,
        exception: Optional[BaseException] = None,
        context: Optional[Dict] = None
    ) -> None:
        entry = LogEntry(
            timestamp=datetime.now().isoformat(),
            level=level,
            message=message,
            exception=f"{type(exception).__name__}: {exception}" if exception else None,
            context=context or {},
        )
        self.entries.append(entry)

        if self.log_to_console and level >= logging.INFO:
            print(entry)
        if self.logger is not None:
            suffix = f" | {entry.exception}" if entry.exception else ""
            suffix += f" | {entry.context}" if entry.context else ""
            self.logger.log(level, message + suffix)

    def log_debug(self, message: str, context: Dict = None) -> None:
        self._record(logging.DEBUG, message, context=context)

    def log_info(self, message: str, context: Dict = None) -> None:
        self._record(logging.INFO, message, context=context)

    def log_warning(self, message: str, context: Dict = None) -> None:
        self._record(logging.WARNING, message, context=context)

    def log_error(self, message: str, exception: Optional[BaseException] = None,
                  context: Dict = None) -> None:
        self._record(logging.ERROR, message, exception, context)

    def log_critical(self, message: str, exception: Optional[BaseException] = None,
                     context: Dict = None) -> None:
        self._record(logging.CRITICAL, message, exception, context)

    @contextmanager
    def timed(self, section: str) -> Iterator[None]:
        """
        Accumulate the wall-clock seconds of a block under `section`.

        Args:
            section: Timing key, e.g. "setup" or "solve".
        """
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            self.timings[section] = self.timings.get(section, 0.0) + elapsed
            self.log_debug(f"{section} took {elapsed:.3f}s")

    def progress(self, task: str, done: int, total: int, every: int = 1) -> None:
        """Log progress of a staged task every `every` steps and at completion."""
        if done == total or (every > 0 and done % every == 0):
            self.log_info(f"{task}: {done}/{total}", context={"done": done, "total": total})

    def get_warning_count(self) -> int:
        return len(self.warnings)
