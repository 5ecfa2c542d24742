"""Example-guided intrinsic-reward actor-critic on desk-scale control tasks.

Subpackages:

* ``netcore`` - dense nets, hand-derived backprop, adaptive-moment optimizer
* ``envs`` - deterministic sparse-reward environments
* ``demos`` - task-specific behaviour demonstrations
* ``intrinsic`` - curiosity/impact intrinsic rewards
* ``classifier`` - recursive familiar-state classifier
* ``regularizer`` - KDE-gated adaptive behaviour cloning
* ``agent`` - actor, twin value heads, replay buffer
* ``harness`` - training loop, evaluation, metrics, checkpoints
* ``vanilla`` - the plain backbone used as an ablation reference
"""

__version__ = "0.1.0"
