"""refgame: a desk-scale laboratory for emergent-language referential games.

Speaker/listener agents communicate through a straight-through
Gumbel-Softmax channel about procedurally generated sprite stimuli under
controlled train/test splits.  The package bundles the training loop, the
compositionality and generalisation metrics, the statistical test kit and
the iterated-learning stability analytics used to interpret the results.
"""

__version__ = "0.1.0"

__all__ = [
    "agents",
    "channel",
    "diffcore",
    "exprunner",
    "game",
    "ilm",
    "metrics",
    "report",
    "stats",
    "stimuli",
]
