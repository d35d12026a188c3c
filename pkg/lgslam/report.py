"""
Plain-text reports written next to the results of every command.
"""

import os
import platform
from typing import Any, Dict, List, Literal, TypedDict

from typing_extensions import Unpack

Status = Literal[0, 2, 3]

STATUS_OK = 0
STATUS_CONFIG_ERROR = 2
STATUS_DIVERGED = 3

States = {
    STATUS_OK: "OK",
    STATUS_CONFIG_ERROR: "CONFIG_ERROR",
    STATUS_DIVERGED: "DIVERGED",
}


class ReportParams(TypedDict, total=False):

    status: Status
    """ 0 (OK), 2 (CONFIG_ERROR), 3 (DIVERGED): equal to the exit code."""

    command: str
    """The name of the subcommand."""

    custom_message: str
    """A one line summary."""

    performance_data: Dict[str, Any]
    """ A dictionary like
          `{'runtime': '1.234s', 'steps': 60000}`"""

    body: str
    """ A longer report text."""

    log_records: str
    """Log records separated by new lines"""


class Report:
    """
    Bundle the outcome of one command run into an object that renders
    itself as text.
    """

    _data: ReportParams

    def __init__(self, **data: Unpack[ReportParams]):
        self._data = data

    @property
    def status(self) -> int:
        return self._data.get("status", STATUS_OK)

    @property
    def status_text(self) -> str:
        """The status as a text word like `OK`."""
        return States[self.status]

    @property
    def command(self) -> str:
        return self._data.get("command", "lgslam")

    @property
    def custom_message(self) -> str:
        return self._data.get("custom_message", "")

    @property
    def performance_data(self) -> str:
        """
        :return: A concatenated string of ``key=value`` pairs.
        """
        performance_data = self._data.get("performance_data")
        if performance_data and isinstance(performance_data, dict):
            pairs: List[str] = []
            for key, value in performance_data.items():
                pairs.append("{!s}={!s}".format(key, value))
            return " ".join(pairs)
        return ""

    @property
    def message(self) -> str:
        output: List[str] = ["[lgslam]:", self.command.upper(), self.status_text]
        if self.custom_message:
            output.append("- {}".format(self.custom_message))
        return " ".join(output)

    @property
    def body(self) -> str:
        output: List[str] = [self.message, ""]
        output.append("Host: {}".format(platform.node()))
        output.append("Python: {}".format(platform.python_version()))
        if self.performance_data:
            output.append("Performance data: {}".format(self.performance_data))

        body = self._data.get("body", "")
        if body:
            output.append("")
            output.append(body)

        log_records = self._data.get("log_records", "")
        if log_records:
            output.append("")
            output.append("Log records:")
            output.append("")
            output.append(log_records)

        return "\n".join(output) + "\n"

    def __str__(self) -> str:
        return self.message

    def write(self, path: str) -> str:
        """Write the report body.

        :param path: A file path or a directory, which then receives a
          ``report.txt``.

        :return: The path of the written file.
        """
        if os.path.isdir(path):
            path = os.path.join(path, "report.txt")
        with open(path, "w") as report_file:
            report_file.write(self.body)
        return path
