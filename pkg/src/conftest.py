# Test wiring: make NumPy >= 2 print scalars the way the doctests expect
# (``True`` rather than ``np.True_``).
# 3rd party:
import numpy as np

try:
    np.set_printoptions(legacy='1.25')
except (TypeError, ValueError):  # NumPy < 2 does not know this mode
    pass
