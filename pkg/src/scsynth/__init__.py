"""scsynth: near-optimal controller synthesis for continuous-state stochastic
systems against bounded-horizon co-safe LTL objectives.

The toolkit quantizes the state space, runs model-free tabular Q-learning on
the quantized observations of a product with the objective's DFA, and bounds
the gap to the true optimum via a Lipschitz closeness argument; an explicit
finite-abstraction value-iteration oracle cross-checks learned values on
systems with known linear-Gaussian dynamics.
"""

__version__ = "0.1.0"
