import logging

from rich.logging import RichHandler

from flowcheck.logging import console, get_logger, setup_logging


def test_loggers_live_under_the_package():
    assert get_logger("flowcheck.oracle").name == "flowcheck.oracle"
    assert get_logger("campaign").name == "flowcheck.campaign"


def test_setup_logging_configures_only_the_package_logger():
    root_handlers = list(logging.getLogger().handlers)
    package = logging.getLogger("flowcheck")
    try:
        setup_logging("DEBUG")
        setup_logging("INFO")
        handlers = [h for h in package.handlers if isinstance(h, RichHandler)]
        assert len(handlers) == 1
        assert handlers[0].console is console
        assert package.level == logging.INFO
        assert not package.propagate
        assert logging.getLogger().handlers == root_handlers
    finally:
        setup_logging("WARNING")


def test_console_writes_to_stderr():
    assert console.stderr
