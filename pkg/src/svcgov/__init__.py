"""svcgov: admissibility governance for runtime reconfiguration of
ontology-typed service graphs, plus the simulation harness that
benchmarks it against weaker stacks."""

__version__ = "0.1.0"
