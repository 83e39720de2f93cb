"""Deterministic research engine for RL trading agents on daily OHLCV data.

Submodules:
    market_data  - ingestion, returns, scaling, indicators, synthetic fixtures
    trading_env  - single-symbol daily trading simulation and portfolio accounting
    neural_net   - minimal dense MLP with hand-rolled backprop and SGD
    rl_agents    - tabular Q-learning, DQN with replay, baseline strategies
    metrics      - performance metrics and FIFO trade matching
    experiment   - config-driven experiment orchestration and reporting
    cli          - command-line entry points
"""

__version__ = "0.1.0"

from . import market_data, metrics, neural_net, rl_agents, trading_env  # noqa: F401
