"""asyncbezier package

Simulation of asynchronous federated training in which clients return
quadratic Bézier curves instead of single models, and the server moves
the global model along these curves depending on the staleness of the
update.
"""

# Import facade functions
from asyncbezier.controllers.simulation import SimConfig, Simulation  # noqa
from asyncbezier.entities.state import StrategyConfig  # noqa
