"""Learned swing-up maneuvers for a cable-suspended aerial platform."""
