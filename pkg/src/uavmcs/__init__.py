"""Multi-UAV mobile crowdsensing simulator and heterogeneous-agent PPO trainer."""

__version__ = "0.1.0"
