"""
MultiExit Evacuation Engine
Crowd evacuation simulation with reciprocal collision avoidance and a
shared Rainbow value network steering every pedestrian.
"""

__version__ = "1.0.0"
__author__ = "MultiExit Evac Team"
