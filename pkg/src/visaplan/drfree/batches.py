# -*- coding: utf-8 -*-  äöü vim: sw=4 sts=4 si et tw=79 cc=+1
"""
Support for minibatches: split shuffled index sequences into batches of a
given equal (maximum) size
"""

# Python compatibility:
from __future__ import absolute_import

__all__ = [
    'cycle_batches',  # generate lists of indexes
    ]


def cycle_batches(count, batch_size, steps, rng):
    """
    Generate <steps> minibatches of indexes into range(count).

    Each pass over the data is a fresh permutation; within a minibatch,
    indexes are drawn without replacement.  The last, shorter batch of a pass
    is used as it is.

    >>> import numpy as np
    >>> rng = np.random.default_rng(0)
    >>> batches = list(cycle_batches(5, 2, 4, rng))
    >>> [len(b) for b in batches]
    [2, 2, 1, 2]
    >>> sorted(sum(batches[:3], []))
    [0, 1, 2, 3, 4]
    >>> list(cycle_batches(5, 0, 4, rng))
    Traceback (most recent call last):
    ...
    ValueError: batch_size must be positive (0)
    """
    if batch_size < 1:
        raise ValueError('batch_size must be positive (%(batch_size)r)'
                         % locals())
    if count < 1:
        return
    done = 0
    while done < steps:
        perm = [int(i) for i in rng.permutation(count)]
        for first in range(0, count, batch_size):
            yield perm[first:first + batch_size]
            done += 1
            if done >= steps:
                return
