# -*- coding: utf-8 -*- äöü
"""
CSV support: the files written by runs, sweeps and comparisons

All files use the 'drfree' dialect (comma separated, '\\n' line endings, so
re-runs produce byte-identical files on every platform) and may start with
'#' comment lines carrying the config hash, the seeds and sign conventions.
"""

# Python compatibility:
from __future__ import absolute_import

# Standard library:
import csv
from io import StringIO

__all__ = ['DrFreeCSV',
           'csv_writer',
           'make_sequencer',
           'write_csv',
           'format_value',
           ]


class DrFreeCSV(csv.excel):
    """
    Like the "excel" dialect, but with plain newlines
    """
    lineterminator = '\n'
csv.register_dialect('drfree', DrFreeCSV)


def csv_writer(csvfile, dialect='drfree', **kwargs):
    r"""
    Like csv.writer, but with our dialect.

    >>> io = StringIO()
    >>> wr = csv_writer(io)
    >>> fieldnames = 'episode return success'.split()

    The "sequencer" writes the given fields of dicts in the requested order;
    other fields are ignored:

    >>> sq = make_sequencer(fieldnames)
    >>> _ = wr.writerow(fieldnames)
    >>> _ = wr.writerow(sq(dict(episode=1, success=True, steps=12, **{'return': -3.5})))
    >>> io.getvalue()
    'episode,return,success\n1,-3.5,True\n'
    """
    return csv.writer(csvfile, dialect, **kwargs)


def make_sequencer(keys, factory=None):
    """
    Return a function which returns the values of each given dict in the
    given order, e.g. to write CSV files.

    >>> names = ['rho', 'cost', 'success_rate']
    >>> values = make_sequencer(names)
    >>> values(dict(rho=0.5, cost=1.25, success_rate=0.8))
    [0.5, 1.25, 0.8]

    The optional factory is applied to every value:

    >>> make_sequencer(names, format_value)(dict(rho=0.5, cost=1/3., success_rate=1))
    ['0.5', '0.333333333333', '1']
    """

    def in_order_values(dic):
        return [dic[key] for key in keys]

    def in_order_transformed_values(dic):
        return [factory(dic[key]) for key in keys]
    if factory is None:
        return in_order_values
    else:
        return in_order_transformed_values


def format_value(val):
    """
    Stable text representation for numbers (12 significant digits)

    >>> format_value(0.1 + 0.2)
    '0.3'
    >>> format_value(True), format_value(None), format_value(7)
    ('1', '', '7')
    """
    if val is None:
        return ''
    if isinstance(val, bool):
        return str(int(val))
    if isinstance(val, float):
        return '%.12g' % val
    try:
        # numpy scalars
        return format_value(val.item())
    except AttributeError:
        return str(val)


def write_csv(path, fieldnames, rows, comments=()):
    """
    Write dict rows to <path>, preceded by '#' comment lines

    >>> import os, tempfile
    >>> fn = os.path.join(tempfile.mkdtemp(), 'x.csv')
    >>> write_csv(fn, ['a', 'b'], [{'a': 1, 'b': 0.5}], comments=['seeds: 0'])
    >>> print(open(fn).read().strip())
    # seeds: 0
    a,b
    1,0.5
    """
    sq = make_sequencer(fieldnames, format_value)
    with open(path, 'w', newline='') as f:
        for line in comments:
            f.write('# %s\n' % (line,))
        wr = csv_writer(f)
        wr.writerow(fieldnames)
        for row in rows:
            wr.writerow(sq(row))
