from .bandit import Bandit
from .maze import Maze, MazeConfig, MazeState
from .recsys import NGramMDP, RecSys, RecState

__all__ = ["Bandit", "Maze", "MazeConfig", "MazeState", "NGramMDP", "RecSys", "RecState"]
