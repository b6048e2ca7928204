"""Best-of-n collective decision making for robot swarms.

Problem instances and their taxonomy (:mod:`bestofn.problem`), the
exploration/dissemination strategy (:mod:`bestofn.strategy`), scenario
builders (:mod:`bestofn.scenarios`), an event-driven swarm simulator
(:mod:`bestofn.simulator`) and predictive models
(:mod:`bestofn.meanfield`).
"""

__version__ = "0.1.0"

from .problem import (  # noqa: E402
    Interaction,
    OptionProfile,
    ProblemInstance,
    Variant,
    best_options,
    classify_variant,
    make_instance,
    validate,
)
from .simulator import BatchMetrics, RunRecord, SwarmConfig, batch, detect_consensus, run  # noqa: E402
from .strategy import DecisionRule  # noqa: E402
