"""Desk-scale cloth manipulation workbench.

Subpackages:

* ``sim``    ground-truth particle cloth simulator and depth rendering
* ``graphs`` point-cloud graphs, matching, labels and datasets
* ``nn``     graph-network forward passes and checkpoints
* ``train``  losses, optimiser and training procedures
* ``plan``   action sampling, rollouts, smoothing and folding planners
* ``evals``  episodes, metrics, sweeps and exports
"""

__version__ = "0.1.0"
