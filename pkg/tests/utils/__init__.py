"""Tests for the utils package."""
