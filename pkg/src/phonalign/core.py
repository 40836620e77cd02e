"""
Core run tracking for Phonalign
===============================

Spans around training epochs, evaluations and recipe stages, a tracker that owns
them and writes every completed span as one JSON entry to a per-session logger,
and the `RunLog` a training run returns.
"""

import contextvars
import json
import logging
import threading
import time
import traceback
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Union
from uuid import uuid4

from .semconv import RunAttributes, RunEvents
from .utils import format_run_stats, generate_session_id

# Context variable for parent span
current_span_id_context = contextvars.ContextVar('current_span_id', default=None)


@dataclass
class SpanRecord:
    """Data structure for one completed span"""
    session_id: str
    span_id: str
    parent_span_id: Optional[str]
    kind: str
    name: str
    attributes: Dict[str, Any]
    timestamp: str
    start_time: float
    end_time: float
    duration: float
    tags: List[str]
    error_report: Optional[Dict] = None
    status: str = "SUCCESS"


class RunSpan:
    """
    Represents one tracked unit of work (an epoch, an evaluation, a recipe stage).

    A span collects attributes while it is open and records timing, status and,
    on failure, an error report with the stack trace.
    """

    def __init__(self, session_id: str, kind: str, name: str, tags: Optional[List[str]] = None,
                 attributes: Optional[Dict[str, Any]] = None):
        self.span_id = str(uuid4())
        self.parent_span_id = current_span_id_context.get()
        self.session_id = session_id
        self.kind = kind
        self.name = name
        self.tags = list(tags or [])
        self.attributes: Dict[str, Any] = dict(attributes or {})
        self.error_report = None
        self.status = "SUCCESS"
        self.start_time = None
        self.end_time = None

    def start(self):
        """Start the span timer"""
        self.start_time = time.time()

    def set_attribute(self, key: str, value: Any):
        self.attributes[key] = value

    def end(self, success: bool = True, error: Optional[BaseException] = None):
        """End the span and record results"""
        self.end_time = time.time()
        self.status = "SUCCESS" if success else "FAILURE"
        if error:
            self.error_report = {
                RunAttributes.ERROR_TYPE: type(error).__name__,
                RunAttributes.ERROR_MESSAGE: str(error),
                RunAttributes.ERROR_STACK_TRACE: "".join(traceback.format_exception(type(error), error, error.__traceback__)),
            }

    def to_record(self) -> SpanRecord:
        duration = (self.end_time - self.start_time) if self.end_time and self.start_time else 0.0
        return SpanRecord(
            session_id=self.session_id,
            span_id=self.span_id,
            parent_span_id=self.parent_span_id,
            kind=self.kind,
            name=self.name,
            attributes=self.attributes,
            timestamp=datetime.fromtimestamp(
                self.start_time).isoformat() if self.start_time else datetime.now().isoformat(),
            start_time=self.start_time or 0.0,
            end_time=self.end_time or 0.0,
            duration=duration,
            tags=self.tags,
            error_report=self.error_report,
            status=self.status,
        )


class RunTracker:
    """
    Owns the spans of one session.

    Key Responsibilities:
    - Managing active spans and completed records
    - Writing each completed record as JSON to a dedicated per-session logger
    - Providing thread-safe operations for concurrent evaluation workers
    """

    def __init__(self, session_id: Optional[str] = None, tags: Optional[List[str]] = None,
                 log_file: Optional[Union[str, Path]] = None):
        self.session_id = session_id or generate_session_id()
        self.tags = list(tags or [])
        self.log_file = log_file
        self._lock = threading.Lock()
        self._active_spans: Dict[str, RunSpan] = {}
        self._completed: List[SpanRecord] = []
        self.setup_logging()
        logging.info(f"Phonalign: RunTracker initialized - Session: {self.session_id}")

    def setup_logging(self):
        """
        Configure the per-session logger that receives one JSON entry per span.

        Existing handlers are removed so re-initialising a session does not duplicate
        entries. Without a log file the entries stay in memory only.
        """
        self.file_logger = logging.getLogger(f'phonalign_run_{self.session_id}')
        self.file_logger.setLevel(logging.INFO)
        self.file_logger.propagate = False
        for handler in self.file_logger.handlers[:]:
            self.file_logger.removeHandler(handler)
            handler.close()
        if self.log_file:
            Path(self.log_file).parent.mkdir(parents=True, exist_ok=True)
            handler = logging.FileHandler(self.log_file, encoding="utf-8")
            handler.setFormatter(logging.Formatter('%(asctime)s - %(message)s'))
            self.file_logger.addHandler(handler)
        else:
            self.file_logger.addHandler(logging.NullHandler())

    def start_span(self, kind: str, name: str, **attributes) -> RunSpan:
        span = RunSpan(self.session_id, kind, name, self.tags, attributes)
        with self._lock:
            self._active_spans[span.span_id] = span
        span.start()
        return span

    def end_span(self, span: RunSpan, success: bool = True, error: Optional[BaseException] = None) -> SpanRecord:
        span.end(success, error)
        with self._lock:
            self._active_spans.pop(span.span_id, None)
            record = span.to_record()
            self._completed.append(record)
            self.log_record(record)
        return record

    @contextmanager
    def span(self, kind: str, name: str, **attributes) -> Iterator[RunSpan]:
        """
        Run a block inside a span. An exception ends the span as FAILURE with its
        error report, is logged and propagates unchanged.
        """
        span = self.start_span(kind, name, **attributes)
        token = current_span_id_context.set(span.span_id)
        try:
            yield span
        except BaseException as e:
            logging.error(f"Phonalign: {kind} {name!r} failed: {type(e).__name__}: {e}")
            self.end_span(span, success=False, error=e)
            raise
        else:
            self.end_span(span)
        finally:
            current_span_id_context.reset(token)

    def log_record(self, record: SpanRecord):
        log_entry = {"event_type": RunEvents.SPAN_COMPLETED, "data": asdict(record)}
        self.file_logger.info(json.dumps(log_entry, indent=2, default=str))

    @property
    def records(self) -> List[SpanRecord]:
        with self._lock:
            return list(self._completed)

    def add_tags(self, tags: List[str]):
        with self._lock:
            for tag in tags:
                if tag not in self.tags:
                    self.tags.append(tag)
        logging.info(f"Phonalign: added tags: {tags}")

    def stats(self) -> Dict[str, Any]:
        with self._lock:
            completed = list(self._completed)
            active = len(self._active_spans)
        return {
            "session_id": self.session_id,
            "total_spans": len(completed),
            "successful_spans": sum(r.status == "SUCCESS" for r in completed),
            "failed_spans": sum(r.status != "SUCCESS" for r in completed),
            "epochs": sum(r.kind == "epoch" for r in completed),
            "skipped_utterances": sum(int(r.attributes.get("run.skipped_utterances", 0)) for r in completed),
            "active_spans": active,
        }

    def shutdown(self):
        """Flush and close the session log"""
        logging.debug(f"Phonalign: RunTracker.shutdown() called.{format_run_stats(self.stats())}")
        for handler in self.file_logger.handlers[:]:
            handler.flush()
            handler.close()
            self.file_logger.removeHandler(handler)
        logging.debug("Phonalign: RunTracker.shutdown() finished.")


@dataclass
class EpochRecord:
    """Summary of one training epoch. `wall_time` is excluded from the canonical form."""
    epoch: int
    train_loss: float
    dev_per: Optional[float]
    lr: float
    skipped: int = 0
    utterances: int = 0
    lr_halved: bool = False
    wall_time: float = 0.0

    def canonical(self) -> Dict[str, Any]:
        data = asdict(self)
        data.pop("wall_time")
        return data


@dataclass
class RunLog:
    """
    Per-epoch records of one training run, the final checkpoint reference and a
    snapshot of the config that produced it.
    """
    config: Dict[str, Any] = field(default_factory=dict)
    epochs: List[EpochRecord] = field(default_factory=list)
    checkpoint: Optional[str] = None

    @property
    def lr_trace(self) -> List[float]:
        return [e.lr for e in self.epochs]

    @property
    def skipped_total(self) -> int:
        return sum(e.skipped for e in self.epochs)

    def canonical_json(self) -> str:
        """Byte-stable serialization: identical config and seed give identical text."""
        return json.dumps({
            "config": self.config,
            "epochs": [e.canonical() for e in self.epochs],
            "checkpoint": self.checkpoint,
        }, sort_keys=True, indent=2)

    def save(self, path: Union[str, Path]):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.canonical_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'RunLog':
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(config=data["config"], epochs=[EpochRecord(**e) for e in data["epochs"]],
                   checkpoint=data.get("checkpoint"))


# --- Global Tracker Instance ---

_global_tracker: Optional[RunTracker] = None
_init_lock = threading.Lock()


def get_tracker() -> Optional[RunTracker]:
    """
    Get the global tracker instance.
    """
    return _global_tracker
