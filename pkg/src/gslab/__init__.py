"""gslab: a numerical lab for ground-state estimates of perturbed
Dirichlet operators on grids.

Modules: orlicz (N-function toolkit), domain (grids and the discrete
Dirichlet form), perturbation (measures, Hardy certificates, the
subcritical ladder), spectral (eigensolver and Green operators),
comparison (the two-sided ground-state/potential estimates), heat
(semigroups and large-time asymptotics), cli (scenario runner).
"""

__version__ = "0.1.0"
