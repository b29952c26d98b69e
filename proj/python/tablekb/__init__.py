from _tablekb import *  # noqa: F401,F403
