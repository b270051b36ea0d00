"""DQN-Fed: fair quasi-Newton federated aggregation."""
import logging

logging.getLogger(__name__).addHandler(logging.NullHandler())
