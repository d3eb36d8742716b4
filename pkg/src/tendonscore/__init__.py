"""Healing-score pipeline for tendon MRI studies."""
