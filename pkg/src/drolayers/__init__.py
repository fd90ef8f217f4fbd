"""Differentiable distributionally robust optimization layers.

Subpackages and modules:

* ``conic``     -- cone programs and the interior-point solver
* ``diff``      -- implicit differentiation of cone-program solutions
* ``ambiguity`` -- parameterized second-order-cone ambiguity sets
* ``reform``    -- worst-case expectation reformulations (moment and Wasserstein)
* ``mip``       -- branch-and-bound and top-T integer enumeration
* ``surrogate`` -- energy-based surrogate value function and its gradient
* ``learner``   -- predictors, projection layer, and training loops
* ``bench``     -- newsvendor and portfolio experiments, metrics, CLI
"""

__version__ = "0.1.0"
