"""Tests for Deep Value Networks."""
