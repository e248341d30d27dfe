"""Configuration: environment settings and run config files."""
