from .config import SimConfig, multi_mode_deck, parse_rank_grid, single_mode_deck
from .rocket_rig import ImbalanceReport, RunResult, imbalance_report, init_rocket_rig, run

__all__ = ["SimConfig", "multi_mode_deck", "single_mode_deck", "parse_rank_grid", "ImbalanceReport",
           "RunResult", "imbalance_report", "init_rocket_rig", "run"]
