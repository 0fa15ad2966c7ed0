import logging
import os
import sys

LOGGER_NAME = "blocksplit"


def setup_logger(level=None):
    logger = logging.getLogger(LOGGER_NAME)
    if level is None:
        level = os.environ.get("BLOCKSPLIT_LOG_LEVEL", "INFO").upper()
    logger.setLevel(level)

    # Called again by the CLI with --verbose; only the level changes then.
    # Logs go to stderr so stdout stays clean for JSON reports
    if not logger.handlers:
        formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')

        ch = logging.StreamHandler(sys.stderr)
        ch.setFormatter(formatter)
        logger.addHandler(ch)

    return logger


logger = setup_logger()
