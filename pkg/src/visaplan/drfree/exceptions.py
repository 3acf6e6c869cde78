# -*- coding: utf-8 -*- vim: et ts=8 sw=4 sts=4 si tw=79 cc=+1
"""\
Exception classes of visaplan.drfree

All classes derive from DrFreeError (a ValueError); the first docstring
paragraph of each class is its message template, which is filled from the
keyword arguments given to the constructor:

>>> err = DimensionMismatch(what='mean', left=2, right=3)
>>> str(err)
'Dimension mismatch for mean: 2 != 3'
>>> err.kwargs['right']
3
>>> isinstance(err, ValueError)
True

Missing keys are a programming error and show up immediately:

>>> DimensionMismatch(left=2)
Traceback (most recent call last):
...
KeyError: 'what'
"""
# Python compatibility:
from __future__ import absolute_import

__all__ = [
    'DrFreeError',
    # gaussian algebra:
    'DimensionMismatch',
    'NotPositiveDefinite',
    'InvalidParameter',
    'NonFiniteValue',
    # solvers:
    'RootNotConverged',
    # policy:
    'EmptyCandidateSet',
    'AllCandidatesFailed',
    # models:
    'NonFiniteGradient',
    'ProvenanceError',
    'CheckpointError',
    # configuration:
    'UnknownConfigKey',
    'InvalidConfigValue',
    ]


class DrFreeError(ValueError):
    """\
    %(message)s
    """
    def __init__(self, **kwargs):
        self.kwargs = kwargs
        template = self.__doc__.strip().split('\n\n', 1)[0]
        self._msg = ' '.join(template.split()) % kwargs
        ValueError.__init__(self, self._msg)

    def __str__(self):
        return self._msg

    def __reduce__(self):
        # keyword-only constructor; needed for worker processes
        return (_restore, (self.__class__, self.kwargs))


def _restore(cls, kwargs):
    return cls(**kwargs)


# ------------------------------------------ [ gaussian algebra ... [
class DimensionMismatch(DrFreeError):
    """\
    Dimension mismatch for %(what)s: %(left)r != %(right)r
    """


class NotPositiveDefinite(DrFreeError):
    """\
    Covariance of %(what)s is not positive definite
    """


class InvalidParameter(DrFreeError):
    """\
    Invalid value for %(name)s: %(value)r (%(reason)s)
    """


class NonFiniteValue(DrFreeError):
    """\
    Non-finite value in %(what)s
    """
# ------------------------------------------ ] ... gaussian algebra ]


class RootNotConverged(DrFreeError):
    """\
    Root finding for %(what)s did not converge (residual %(residual)g)
    """


# ---------------------------------------------------- [ policy ... [
class EmptyCandidateSet(DrFreeError):
    """\
    No candidate actions given
    """


class AllCandidatesFailed(DrFreeError):
    """\
    All %(count)d candidate actions failed; last error: %(last)s
    """
# ---------------------------------------------------- ] ... policy ]


# ---------------------------------------------------- [ models ... [
class NonFiniteGradient(DrFreeError):
    """\
    Non-finite gradient in %(what)s; training step aborted
    """


class ProvenanceError(DrFreeError):
    """\
    Transition with provenance %(source)r must not be used for %(use)s
    """


class CheckpointError(DrFreeError):
    """\
    Invalid checkpoint %(path)s: %(reason)s
    """
# ---------------------------------------------------- ] ... models ]


# --------------------------------------------- [ configuration ... [
class UnknownConfigKey(DrFreeError):
    """\
    Unknown config key %(key)r
    """


class InvalidConfigValue(DrFreeError):
    """\
    Invalid value for config key %(key)r: %(value)r (%(reason)s)
    """
# --------------------------------------------- ] ... configuration ]
