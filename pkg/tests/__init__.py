"""Tests for the querybench application."""
