from .base import IncompleteModel
from .choice_set import ChoiceSetModel
from .entry_game import GAME_SPACE, EntryGame, EntryGameTheta
from .latent import LatentKind, LatentSpec, gauss_hermite, qmc_normal
from .panel import PanelBinaryModel

__all__ = [
    "GAME_SPACE",
    "ChoiceSetModel",
    "EntryGame",
    "EntryGameTheta",
    "IncompleteModel",
    "LatentKind",
    "LatentSpec",
    "PanelBinaryModel",
    "gauss_hermite",
    "qmc_normal",
]
