"""Goal-aware fragment extraction, assembly and modification.

A fragment-based molecular optimization engine: a graph information
bottleneck scores fragments by their contribution to a target property, a
soft actor-critic assembles them into new molecules, a genetic algorithm
modifies the best ones, and newly discovered fragments flow back into the
vocabulary each cycle.
"""

__version__ = "0.1.0"
