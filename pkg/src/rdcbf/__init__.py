"""Robust dynamic CBF safety filtering for a kinematic mobile manipulator."""
