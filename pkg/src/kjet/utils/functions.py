import hashlib
import logging
import sys
from typing import Callable

import numpy as np


def log_exception(command: str = None):
    """
    Logs an exception printing the file and the line
    number from where the method is called

    :param command: if set will include the command name in the log
    """
    exc_type, exc_obj, exc_tb = sys.exc_info()
    if command is None:
        logging.error(
            "exception: %s file: %s line: %s",
            exc_type,
            exc_tb.tb_frame.f_code.co_filename,
            exc_tb.tb_lineno,
        )
    else:
        logging.error(
            "command: %s failed with exception: %s file: %s line: %s",
            command,
            exc_type,
            exc_tb.tb_frame.f_code.co_filename,
            exc_tb.tb_lineno,
        )


def get_yaml_item_value(cont: dict[str, any], item: str, default: any) -> any:
    """
    Sets the value of item from a decoded problem file.

    :param cont: dict of all items from the problem file
    :param item: name of the item
    :param default: default value
    :return: item value - if not specified the default value is returned
    """
    return default if cont.get(item) is None else cont.get(item)


def file_sha256(content: bytes) -> str:
    """
    Hex digest of the raw content of an input file, echoed in reports
    """
    return hashlib.sha256(content).hexdigest()


def central_difference(
    function: Callable[[np.ndarray], float],
    point: np.ndarray,
    slot: int,
    step: float = 1e-5,
    order: int = 2,
) -> float:
    """
    Numeric partial derivative of `function` along one slot of a flat
    argument vector.

    :param function: scalar function of the flat vector
    :param point: where the derivative is taken
    :param slot: position of the differentiation variable
    :param step: finite difference step
    :param order: accuracy order, 2 or 4
    :return: the derivative estimate
    """
    if order not in (2, 4):
        raise ValueError(f"unsupported difference order {order}")
    base = np.asarray(point, dtype=float)

    def shifted(multiple: int) -> float:
        moved = base.copy()
        moved[slot] += multiple * step
        return float(function(moved))

    if order == 2:
        return (shifted(1) - shifted(-1)) / (2 * step)
    return (
        -shifted(2) + 8 * shifted(1) - 8 * shifted(-1) + shifted(-2)
    ) / (12 * step)
