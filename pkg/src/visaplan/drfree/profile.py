# -*- coding: utf-8 -*- vim: ts=8 sts=4 sw=4 si et tw=79
"""\
Mini profiler as a context manager

Usage:
    with StopWatch('episode 3', logger=logger) as stopwatch:
        ...
        stopwatch.lap('decision steps')
        ...
        stopwatch.lap('model update')

A line is logged when entering and leaving the context, and on every lap.
The meta decorator "profile" wraps a function in a StopWatch context if (and
only if) its first argument is true:

    @profile(debug_active, logger)
    def train_models(...):
        ...

Otherwise the function is returned unchanged, at no cost.

>>> from visaplan.drfree.mock import MockLogger
>>> logger = MockLogger()
>>> with StopWatch('update', logger=logger, clock=iter([1.0, 1.5, 2.0]).__next__) as sw:
...     sw.lap('fit')
>>> [txt for (lvl, txt) in logger]
['StopWatch (update): START [', 'StopWatch (update): 0.500000 fit', 'StopWatch (update): 1.000000 (overall time)', 'StopWatch (update):   END  ]']
"""
# Python compatibility:
from __future__ import absolute_import, print_function

# Standard library:
from functools import wraps
from time import perf_counter

__all__ = [
    'StopWatch',
    'profile',
    ]

LAP_MASK = '%sStopWatch (%s): %f %s'
DEFAULT_LOGGER_METHOD = 'info'
NESTING_DEPTH = 0
NESTING_DELTA = 2


class StopWatch(object):
    def __init__(self, txt, enable=True, **kwargs):
        """
        txt - label of the mini profiler, e.g. a function name

        Keyword options:

        logger - a logger; its "info" method is used
        method - alternatively, a logging method, e.g. logger.debug
        clock - a function returning seconds (default: time.perf_counter)

        Without a logger or method, output goes to stdout.
        """
        self._disabled = not enable
        self.txt = txt
        self._clock = kwargs.pop('clock', perf_counter)
        logger = kwargs.pop('logger', None)
        method = kwargs.pop('method', None)
        if kwargs:
            raise TypeError('Unknown option(s) %s' % sorted(kwargs))
        if logger is None:
            self.method = method or self._to_stdout
        else:
            self.method = getattr(logger, method or DEFAULT_LOGGER_METHOD)

    def _to_stdout(self, txt, *args):
        print(txt % args)

    def __repr__(self):
        return '<%s.%s(%r)>' % (
            self.__module__,
            self.__class__.__name__,
            self.txt,
            )

    def __enter__(self):
        if self._disabled:
            return self
        global NESTING_DEPTH
        self._nesting = NESTING_DEPTH
        start = self._start = self._clock()
        self._last = [start]
        self.method('%sStopWatch (%s): START [',
                    ' ' * self._nesting, self.txt)
        NESTING_DEPTH += NESTING_DELTA
        return self

    def lap(self, txt, delta=None):
        if self._disabled:
            return
        now = self._clock()
        if delta is None:
            delta = now - self._last[-1]
        self._last.append(now)
        self.method(LAP_MASK, ' ' * self._nesting, self.txt, delta, txt)

    def __exit__(self, exc_type, exc_value, traceback):
        if self._disabled:
            return
        global NESTING_DEPTH
        NESTING_DEPTH -= NESTING_DELTA
        now = self._clock()
        self.method(LAP_MASK, ' ' * self._nesting, self.txt,
                    now - self._start, '(overall time)')
        self.method('%sStopWatch (%s):   END  ]',
                    ' ' * self._nesting, self.txt)


def profile(active, logger=None):
    """
    Meta decorator: if <active>, wrap the function in a StopWatch context;
    otherwise return the decorated function unchanged.

    >>> def f():
    ...     return 42
    >>> profile(False)(f) is f
    True
    """
    def dummy(func):
        return func

    def decorate_with_stopwatch(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            with StopWatch(func.__name__, logger=logger):
                return func(*args, **kwargs)
        return wrapper
    if active:
        return decorate_with_stopwatch
    return dummy
