import logging

from rich.logging import RichHandler

__all__ = ['log', 'setup_logging']

# Library modules only emit records; handlers are the application's business
log = logging.getLogger('pyimpflow')
log.addHandler(logging.NullHandler())


def setup_logging(verbose=False):
    """
    Route pyimpflow log records to the terminal through rich.

    verbose : bool
        If True, show DEBUG records (per-training-run summaries).
        Otherwise only INFO and above are shown.
    """
    level = logging.DEBUG if verbose else logging.INFO
    handler = RichHandler(show_path=False, rich_tracebacks=True)
    handler.setFormatter(logging.Formatter("%(message)s", datefmt="[%X]"))
    for h in list(log.handlers):
        if isinstance(h, RichHandler):
            log.removeHandler(h)
    log.addHandler(handler)
    log.setLevel(level)
    return log
