"""Scenario configuration, episode runner, metrics and the command line."""
