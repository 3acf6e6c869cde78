# -*- coding: utf-8 -*- äöü vim: ts=8 sts=4 sw=4 si et tw=79
"""
Mock classes for doctests and tests
"""

# Python compatibility:
from __future__ import absolute_import

__all__ = ('MockLogger',
           )


class MockLogger(list):
    """
    For testing; writes 2-tuples to the list and otherwise behaves as one.

    >>> logger = MockLogger()
    >>> logger.info('episode %(episode)d done', {'episode': 3})
    >>> logger.error('%d candidates failed', 2)
    >>> list(logger)
    [('INFO', 'episode 3 done'), ('ERROR', '2 candidates failed')]
    >>> logger.levels()
    ['INFO', 'ERROR']
    """
    def _cook(self, txt, *args):
        if args:
            if not args[1:] and isinstance(args[0], dict):
                return txt % args[0]
            return txt % args
        else:
            return txt

    def debug(self, txt, *args):
        self.append(('DEBUG', self._cook(txt, *args)))

    def error(self, txt, *args):
        self.append(('ERROR', self._cook(txt, *args)))

    def info(self, txt, *args):
        self.append(('INFO', self._cook(txt, *args)))

    def warning(self, txt, *args):
        self.append(('WARN', self._cook(txt, *args)))
    warn = warning

    def levels(self):
        return [tup[0] for tup in self]
