"""Test suite for the evacuation engine."""
