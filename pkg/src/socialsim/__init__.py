"""socialsim: a joint physical-social simulation and inference engine.

Two planning agents with partial observability act in a 2D physics world;
episodes are procedurally generated, recorded, replayed, inverted (goal /
relationship / strength inference by simulation), and served to a two-player
web game over the bundled FastAPI service.
"""

__version__ = "0.1.0"
