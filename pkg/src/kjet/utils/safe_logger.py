import datetime
import logging
from queue import Queue
from threading import Thread
from typing import Callable, Optional

LEVELS: dict[str, Callable[[str], None]] = {
    "ERR": logging.error,
    "WRN": logging.warning,
    "INF": logging.info,
    "DBG": logging.debug,
}

_STOP = object()


class SafeLogger:
    """
    Thread-safe logger shared by the command line, the acceptance suite
    and the integration pool. With a file name every message is queued
    and appended by a single writer thread as a timestamped
    `[TAG] message` line, otherwise messages go to the logging package.

    Usable as a context manager, leaving the block closes the file.
    """

    def __init__(
        self, filename: Optional[str] = None, write_mode: str = "w+"
    ):
        """
        :param filename: the log file name, if `None` the class forwards
            to `logging`
        :param write_mode: file open mode
        """
        self._filename = filename
        self._queue: Optional[Queue] = None
        self._writer: Optional[Thread] = None
        if filename is not None:
            self._stream = open(filename, write_mode)
            self._queue = Queue()
            self._writer = Thread(
                name="SafeLogWriter", target=self._drain, daemon=True
            )
            self._writer.start()

    @property
    def log_file_name(self) -> Optional[str]:
        return self._filename

    @property
    def closed(self) -> bool:
        return self._queue is None

    def log(self, tag: str, data: str):
        """
        Logs a message with one of the tags ERR, WRN, INF or DBG

        :param tag: message tag
        :param data: the log message
        """
        if self._queue is None:
            LEVELS[tag](data)
            return
        stamp = datetime.datetime.now().strftime("%Y-%m-%d %H:%M:%S")
        self._queue.put(f"{stamp} [{tag}] {data}")

    def error(self, data: str):
        self.log("ERR", data)

    def warning(self, data: str):
        self.log("WRN", data)

    def info(self, data: str):
        self.log("INF", data)

    def debug(self, data: str):
        self.log("DBG", data)

    def _drain(self):
        while True:
            data = self._queue.get()
            if data is _STOP:
                break
            self._stream.write(f"{data}\n")
            self._stream.flush()

    def close(self):
        """
        Writes the pending messages, stops the writer thread and closes
        the file. Later messages go to the logging package.
        """
        if self._queue is None:
            return
        self._queue.put(_STOP)
        self._writer.join()
        self._queue = None
        self._stream.close()

    def __enter__(self) -> "SafeLogger":
        return self

    def __exit__(self, *exc_info):
        self.close()
