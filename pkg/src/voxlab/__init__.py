"""voxlab: a laboratory for brain-body co-optimization of 2D voxel soft robots.

Subsystems: `morphology` (design space), `physics` (mass-spring simulator),
`controller` (neural control), `evaluation` (locomotion task), `evolution`
(AFPO / MAP-Elites engines), `landscape` (exhaustive morphology-fitness
dataset), `analysis` (statistics and figure data), `cli` (orchestrator).
"""

__version__ = "0.1.0"
