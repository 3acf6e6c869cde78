# -*- coding: utf-8 -*- vim: ts=8 sts=4 sw=4 si et tw=79
"""\
Logging support for visaplan.drfree

Usage, in every module:

    from visaplan.drfree.log import getLogSupport
    logger, debug_active, DEBUG = getLogSupport(fn=__file__)

The logger is named after the module (visaplan.drfree.<module>);
debug_active is controlled by the DRFREE_DEBUG environment variable.

>>> logger, debug_active, DEBUG = getLogSupport('ambiguity', environ={})
>>> logger.name
'visaplan.drfree.ambiguity'
>>> debug_active
False
>>> getLogSupport('x', environ={'DRFREE_DEBUG': 'yes'})[1]
True
"""
# Python compatibility:
from __future__ import absolute_import

# Standard library:
import os
from os.path import basename, splitext

# Local imports:
from visaplan.drfree.config import makeBool

# Logging / Debugging:
import logging

__all__ = [
    'getLogSupport',
    'setup_logging',
    ]

PACKAGE_LOGGER = 'visaplan.drfree'
LOG_FORMAT = '%(asctime)s %(levelname)-7s %(name)s: %(message)s'


def getLogSupport(name=None, fn=None, environ=None):
    """
    Return a (logger, debug_active, DEBUG) triple

    name -- the logger name, relative to the package
    fn -- alternatively, a module file name (__file__)
    """
    if name is None:
        if fn is None:
            name = 'main'
        else:
            name = splitext(basename(fn))[0]
    if environ is None:
        environ = os.environ
    logger = logging.getLogger('.'.join((PACKAGE_LOGGER, name)))
    debug_active = makeBool(environ.get('DRFREE_DEBUG'), 'no')
    if debug_active:
        logger.setLevel(logging.DEBUG)
    return logger, debug_active, logger.debug


def setup_logging(level='INFO', stream=None):
    """
    Configure the package root logger once (for the command line only)
    """
    root = logging.getLogger(PACKAGE_LOGGER)
    if not root.handlers:
        handler = logging.StreamHandler(stream)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(handler)
    if isinstance(level, str):
        level = getattr(logging, level.upper())
    root.setLevel(level)
    return root
