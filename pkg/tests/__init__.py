"""Tests for reinvest."""
