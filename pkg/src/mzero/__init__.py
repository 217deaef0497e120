"""Solvers for multiple zeros of known multiplicity, with an exact order oracle.

Subpackages:

* ``scalar``   -- precision-aware m-th roots and ratios (branch conventions)
* ``exprs``    -- expression parsing, symbolic differentiation, counted oracles
* ``weights``  -- weight functions with declared Taylor data and condition sets
* ``series``   -- exact rational error-series engine (order oracle)
* ``solvers``  -- the iteration families and the driver
* ``analysis`` -- convergence-order estimation and the reference problem corpus
* ``bench``    -- double-precision timing experiments
* ``cli``      -- command-line entry point
"""

__version__ = "0.1.0"
